//! The TOML run configuration and how it resolves to a vocabulary and a
//! model source.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::classifier::{resolve_assets, EncoderConfig, ModelSource, TrainConfig};
use crate::encode::{demo::demo_vocab, EncoderVocab};
use crate::evalx::{Fractions, Protocol};

/// Pretrained asset used when the configuration names none.
pub const DEFAULT_PRETRAINED: &str = "camembert-base";

/// Everything a `train` or `experiment` invocation needs. Command-line
/// flags override the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub protocol: Protocol,
    pub runs: usize,
    /// Base seed; run `k` uses `seed + k`.
    pub seed: u64,
    pub fractions: Fractions,
    pub model: ModelSection,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: None,
            out: None,
            protocol: Protocol::SameApps,
            runs: 10,
            seed: 0,
            fractions: Fractions::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Asset directory or name resolved under `AVIS_ASSETS`.
    pub pretrained: Option<String>,
    /// `tokenizer.json` path, or `demo` for the bundled vocabulary.
    pub tokenizer: Option<String>,
    /// Train a freshly initialized encoder of this shape instead.
    pub random_init: Option<RandomEncoder>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomEncoder {
    pub layers: usize,
    pub hidden_size: usize,
    pub heads: usize,
    pub intermediate_size: usize,
    pub dropout: f64,
}

impl Default for RandomEncoder {
    fn default() -> Self {
        RandomEncoder {
            layers: 2,
            hidden_size: 32,
            heads: 2,
            intermediate_size: 64,
            dropout: 0.1,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.runs < 1 {
            return Err(CliError::Usage("runs must be at least 1".into()));
        }
        self.fractions.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Usage(e.to_string()))
    }

    /// Vocabulary (at the configured length) and encoder source.
    pub fn resolve_model(&self) -> Result<(EncoderVocab, ModelSource), CliError> {
        let data_err = |e: crate::encode::EncodeError| CliError::Data(e.to_string());
        let explicit_vocab = match self.model.tokenizer.as_deref() {
            Some("demo") => Some(demo_vocab()),
            Some(path) => Some(EncoderVocab::load(path).map_err(data_err)?),
            None => None,
        };
        let (vocab, source) = match &self.model.random_init {
            Some(shape) => {
                let vocab = explicit_vocab.unwrap_or_else(demo_vocab);
                let max_len = self.train.max_len;
                let pad = vocab.pad_id();
                let enc = EncoderConfig {
                    hidden_size: shape.hidden_size,
                    num_hidden_layers: shape.layers,
                    num_attention_heads: shape.heads,
                    intermediate_size: shape.intermediate_size,
                    hidden_dropout_prob: shape.dropout,
                    attention_probs_dropout_prob: shape.dropout,
                    ..EncoderConfig::tiny(vocab.vocab_size(), max_len, pad, shape.layers)
                };
                (vocab, ModelSource::RandomInit(enc))
            }
            None => {
                let name = self
                    .model
                    .pretrained
                    .clone()
                    .unwrap_or_else(|| DEFAULT_PRETRAINED.to_string());
                let vocab = match explicit_vocab {
                    Some(v) => v,
                    None => {
                        let dir = resolve_assets(&name).map_err(|e| CliError::Usage(e.to_string()))?;
                        EncoderVocab::load(dir.join("tokenizer.json")).map_err(data_err)?
                    }
                };
                (vocab, ModelSource::Pretrained(name))
            }
        };
        let vocab = vocab.with_max_len(self.train.max_len).map_err(data_err)?;
        Ok((vocab, source))
    }
}

//! Transformer encoder with a four-output linear head, fine-tuned with a
//! per-label sigmoid cross-entropy.
//!
//! The head reads the hidden state of the `<s>` token. Each output is an
//! independent binary decision, so a review can carry any subset of labels.

pub mod encoder;
pub mod gradcheck;
mod model;
mod train;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Label, LabelSet};

pub use encoder::EncoderConfig;
pub use gradcheck::{gradient_check, GradientReport};
pub use model::{load_model, resolve_assets, save_model, ModelConfig, ModelHandle, ModelSource};
pub use train::{examples_from, train, EpochLog, TrainExample, TrainLog};

/// Environment variable naming the directory that holds pretrained assets.
pub const ASSETS_ENV: &str = "AVIS_ASSETS";

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("input shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("non-finite value: {0}")]
    Numeric(String),
    #[error("cannot load {component} from {}: {message}", path.display())]
    Load {
        component: &'static str,
        path: PathBuf,
        message: String,
    },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}

/// Fine-tuning hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Probability at or above which a label is predicted.
    pub threshold: f64,
    pub max_len: usize,
    /// Micro-batches whose gradients are summed before each optimizer step.
    pub gradient_accumulation: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 3,
            batch_size: 1,
            learning_rate: 2e-5,
            weight_decay: 0.01,
            seed: 0,
            threshold: 0.5,
            max_len: crate::encode::DEFAULT_MAX_LEN,
            gradient_accumulation: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: String| Err(ClassifierError::Config(m));
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size < 1 || self.gradient_accumulation < 1 {
            return bad("batch_size and gradient_accumulation must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay {} must be non-negative", self.weight_decay));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} must lie strictly between 0 and 1", self.threshold));
        }
        if self.max_len < 2 {
            return bad(format!("max_len {} leaves no room for <s> and </s>", self.max_len));
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Raw head outputs in label order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelLogits(pub [f64; 4]);

impl LabelLogits {
    pub fn get(&self, label: Label) -> f64 {
        self.0[label.index()]
    }

    pub fn probabilities(&self) -> [f64; 4] {
        self.0.map(sigmoid)
    }

    /// Labels whose probability is at least `threshold`.
    pub fn labels(&self, threshold: f64) -> LabelSet {
        LabelSet::from_flags(self.probabilities().map(|p| p >= threshold))
    }
}

/// Sigmoid cross-entropy of one review averaged over the four labels,
/// evaluated as `max(z, 0) - z*y + ln(1 + e^-|z|)` so large logits cannot
/// overflow.
pub fn loss(logits: &LabelLogits, target: &LabelSet) -> Result<f64, ClassifierError> {
    if let Some(z) = logits.0.iter().find(|z| !z.is_finite()) {
        return Err(ClassifierError::Numeric(format!("logit {z}")));
    }
    let y = target.flags();
    let total: f64 = logits
        .0
        .iter()
        .zip(y)
        .map(|(&z, y)| {
            let y = if y { 1.0 } else { 0.0 };
            z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
        })
        .sum();
    Ok(total / 4.0)
}

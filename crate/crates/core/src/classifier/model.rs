use std::collections::HashMap;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, IndexOp, Module, Tensor};
use candle_nn::{VarBuilder, VarMap};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::encoder::{batch_inputs, Dropout, Encoder, EncoderConfig, Linear};
use super::{ClassifierError, LabelLogits, TrainConfig, ASSETS_ENV};
use crate::corpus::{Label, LabelSet};
use crate::encode::EncodedReview;
use crate::fsutil;

const WEIGHTS_FILE: &str = "model.safetensors";
const CONFIG_FILE: &str = "model_config.json";
const ENCODER_PREFIX: &str = "roberta";
const HEAD_PREFIX: &str = "classifier";
/// Reviews per forward pass at inference time.
const PREDICT_CHUNK: usize = 16;

/// Where encoder weights come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    /// A directory with `config.json` and `model.safetensors` (or
    /// `pytorch_model.bin`), or an asset name resolved with [`resolve_assets`].
    Pretrained(String),
    /// Fresh weights, drawn from the training seed.
    RandomInit(EncoderConfig),
}

/// Everything needed to rebuild a model besides its weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    /// Head output order.
    pub labels: Vec<String>,
    /// Pretrained asset the encoder started from, if any.
    pub encoder_source: Option<String>,
}

/// Encoder plus head, with the configuration they were built from.
pub struct ModelHandle {
    varmap: VarMap,
    encoder: Encoder,
    head: Linear,
    config: ModelConfig,
    device: Device,
}

/// Finds a pretrained asset directory: `name` itself if it is a directory,
/// else `$AVIS_ASSETS/name`, else `$AVIS_ASSETS` when it directly holds a
/// `config.json`.
pub fn resolve_assets(name: &str) -> Result<PathBuf, ClassifierError> {
    let direct = PathBuf::from(name);
    if direct.is_dir() {
        return Ok(direct);
    }
    let missing = |message: String| ClassifierError::Load {
        component: "pretrained encoder",
        path: direct.clone(),
        message,
    };
    let root = std::env::var_os(ASSETS_ENV)
        .map(PathBuf::from)
        .ok_or_else(|| missing(format!("not a directory and {ASSETS_ENV} is unset")))?;
    let nested = root.join(name);
    if nested.is_dir() {
        return Ok(nested);
    }
    if root.join("config.json").is_file() {
        return Ok(root);
    }
    Err(missing(format!(
        "not found directly or under {ASSETS_ENV}={}",
        root.display()
    )))
}

fn label_names() -> Vec<String> {
    Label::ALL.iter().map(|l| l.key().to_string()).collect()
}

impl ModelHandle {
    /// Builds a model whose head is freshly initialized from `train.seed`.
    pub fn new(source: ModelSource, train: TrainConfig) -> Result<Self, ClassifierError> {
        train.validate()?;
        match source {
            ModelSource::RandomInit(encoder) => {
                let config = ModelConfig {
                    encoder,
                    train,
                    labels: label_names(),
                    encoder_source: None,
                };
                let model = Self::declare(config)?;
                model.init_random(|_| true)?;
                Ok(model)
            }
            ModelSource::Pretrained(name) => {
                let dir = resolve_assets(&name)?;
                let encoder = read_json::<EncoderConfig>(&dir.join("config.json"), "encoder config")?;
                let config = ModelConfig {
                    encoder,
                    train,
                    labels: label_names(),
                    encoder_source: Some(name),
                };
                let model = Self::declare(config)?;
                let tensors = read_pretrained(&dir, &model.device)?;
                model.load_encoder(&tensors, &dir)?;
                model.init_random(|name| name.starts_with(HEAD_PREFIX))?;
                Ok(model)
            }
        }
    }

    fn declare(config: ModelConfig) -> Result<Self, ClassifierError> {
        config.encoder.validate().map_err(ClassifierError::Config)?;
        config.train.validate()?;
        if config.labels != label_names() {
            return Err(ClassifierError::Config(format!(
                "label order {:?} does not match {:?}",
                config.labels,
                label_names()
            )));
        }
        if config.train.max_len > config.encoder.max_input_len() {
            return Err(ClassifierError::Config(format!(
                "max_len {} exceeds the encoder's {} positions",
                config.train.max_len,
                config.encoder.max_input_len()
            )));
        }
        let device = Device::cuda_if_available(0)?;
        let varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, DType::F32, &device);
        let encoder = Encoder::new(vb.pp(ENCODER_PREFIX), &config.encoder)?;
        let head = Linear::new(vb.pp(HEAD_PREFIX), config.encoder.hidden_size, Label::ALL.len())?;
        Ok(ModelHandle {
            varmap,
            encoder,
            head,
            config,
            device,
        })
    }

    /// Seeded initialization of the selected parameters: normal weights,
    /// unit LayerNorm scales, zero biases. Names are visited in sorted order
    /// so the draw does not depend on map iteration.
    fn init_random(&self, select: impl Fn(&str) -> bool) -> Result<(), ClassifierError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.train.seed);
        let normal = Normal::new(0.0f32, self.config.encoder.initializer_range as f32)
            .map_err(|e| ClassifierError::Config(e.to_string()))?;
        let data = self.varmap.data().lock().expect("varmap lock");
        let mut names: Vec<&String> = data.keys().filter(|n| select(n)).collect();
        names.sort();
        for name in names {
            let var = &data[name];
            let shape = var.shape().clone();
            let values: Vec<f32> = if name.ends_with("LayerNorm.weight") {
                vec![1.0; shape.elem_count()]
            } else if name.ends_with(".bias") {
                vec![0.0; shape.elem_count()]
            } else {
                (0..shape.elem_count()).map(|_| normal.sample(&mut rng)).collect()
            };
            var.set(&Tensor::from_vec(values, shape, &self.device)?)?;
        }
        Ok(())
    }

    fn load_encoder(&self, tensors: &HashMap<String, Tensor>, dir: &Path) -> Result<(), ClassifierError> {
        let data = self.varmap.data().lock().expect("varmap lock");
        for (name, var) in data.iter().filter(|(n, _)| n.starts_with(ENCODER_PREFIX)) {
            let rest = &name[ENCODER_PREFIX.len() + 1..];
            let found = [name.clone(), format!("camembert.{rest}"), rest.to_string()]
                .into_iter()
                .find_map(|k| tensors.get(&k))
                .ok_or_else(|| ClassifierError::Load {
                    component: "encoder weights",
                    path: dir.to_path_buf(),
                    message: format!("missing tensor {name}"),
                })?;
            if found.dims() != var.dims() {
                return Err(ClassifierError::Load {
                    component: "encoder weights",
                    path: dir.to_path_buf(),
                    message: format!("{name} has shape {:?}, expected {:?}", found.dims(), var.dims()),
                });
            }
            var.set(&found.to_dtype(DType::F32)?)?;
        }
        Ok(())
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn train_config(&self) -> &TrainConfig {
        &self.config.train
    }

    pub fn max_len(&self) -> usize {
        self.config.train.max_len
    }

    pub fn hidden_size(&self) -> usize {
        self.config.encoder.hidden_size
    }

    pub(crate) fn varmap(&self) -> &VarMap {
        &self.varmap
    }

    pub(crate) fn device(&self) -> &Device {
        &self.device
    }

    /// Replaces the decision threshold without touching weights.
    pub fn set_threshold(&mut self, threshold: f64) -> Result<(), ClassifierError> {
        let train = TrainConfig {
            threshold,
            ..self.config.train.clone()
        };
        train.validate()?;
        self.config.train = train;
        Ok(())
    }

    pub(crate) fn set_train_config(&mut self, train: TrainConfig) -> Result<(), ClassifierError> {
        train.validate()?;
        if train.max_len != self.config.train.max_len {
            return Err(ClassifierError::Config(format!(
                "max_len {} differs from the model's {}",
                train.max_len, self.config.train.max_len
            )));
        }
        self.config.train = train;
        Ok(())
    }

    pub(crate) fn check_input(&self, enc: &EncodedReview) -> Result<(), ClassifierError> {
        let n = self.max_len();
        if enc.token_ids.len() != n || enc.attention_mask.len() != n {
            return Err(ClassifierError::Shape {
                expected: format!("{n} positions"),
                got: format!(
                    "{} ids and {} mask entries",
                    enc.token_ids.len(),
                    enc.attention_mask.len()
                ),
            });
        }
        if enc.active_len == 0 || enc.active_len > n {
            return Err(ClassifierError::Shape {
                expected: format!("active length in 1..={n}"),
                got: enc.active_len.to_string(),
            });
        }
        let vocab = self.config.encoder.vocab_size;
        if let Some(id) = enc.token_ids.iter().find(|&&id| id as usize >= vocab) {
            return Err(ClassifierError::Shape {
                expected: format!("token ids below {vocab}"),
                got: id.to_string(),
            });
        }
        Ok(())
    }

    /// `<s>` hidden states `(batch, hidden)`. Inputs are cut to the longest
    /// active length in the batch: padding keys are masked out, so the
    /// result does not depend on trailing padding.
    pub(crate) fn pooled_tensor(
        &self,
        batch: &[&EncodedReview],
        dropout: Option<&mut Dropout>,
    ) -> Result<Tensor, ClassifierError> {
        for enc in batch {
            self.check_input(enc)?;
        }
        let len = batch.iter().map(|e| e.active_len).max().unwrap_or(1);
        let ids: Vec<&[u32]> = batch.iter().map(|e| e.token_ids.as_slice()).collect();
        let masks: Vec<&[u8]> = batch.iter().map(|e| e.attention_mask.as_slice()).collect();
        let (ids, positions, mask) =
            batch_inputs(&ids, &masks, len, self.config.encoder.pad_token_id, &self.device)?;
        let hidden = self.encoder.forward(&ids, &positions, &mask, dropout)?;
        Ok(hidden.i((.., 0, ..))?.contiguous()?)
    }

    pub(crate) fn logits_tensor(
        &self,
        batch: &[&EncodedReview],
        dropout: Option<&mut Dropout>,
    ) -> Result<Tensor, ClassifierError> {
        let pooled = self.pooled_tensor(batch, dropout)?;
        Ok(self.head.forward(&pooled)?)
    }

    /// Head outputs for one review (inference mode, no dropout).
    pub fn predict_logits(&self, enc: &EncodedReview) -> Result<LabelLogits, ClassifierError> {
        Ok(self.predict_logits_batch(std::slice::from_ref(enc))?[0])
    }

    pub fn predict_logits_batch(
        &self,
        encs: &[EncodedReview],
    ) -> Result<Vec<LabelLogits>, ClassifierError> {
        let mut out = Vec::with_capacity(encs.len());
        for chunk in encs.chunks(PREDICT_CHUNK) {
            let refs: Vec<&EncodedReview> = chunk.iter().collect();
            let rows = self.logits_tensor(&refs, None)?.to_dtype(DType::F64)?.to_vec2::<f64>()?;
            out.extend(rows.into_iter().map(|r| LabelLogits([r[0], r[1], r[2], r[3]])));
        }
        Ok(out)
    }

    pub fn predict_proba(&self, enc: &EncodedReview) -> Result<[f64; 4], ClassifierError> {
        Ok(self.predict_logits(enc)?.probabilities())
    }

    /// Labels with probability at or above the configured threshold.
    pub fn predict_labels(&self, enc: &EncodedReview) -> Result<LabelSet, ClassifierError> {
        Ok(self.predict_logits(enc)?.labels(self.config.train.threshold))
    }

    pub fn predict_labels_batch(
        &self,
        encs: &[EncodedReview],
    ) -> Result<Vec<LabelSet>, ClassifierError> {
        let t = self.config.train.threshold;
        Ok(self
            .predict_logits_batch(encs)?
            .into_iter()
            .map(|l| l.labels(t))
            .collect())
    }

    /// `<s>` hidden state of one review, in f64.
    pub fn pooled(&self, enc: &EncodedReview) -> Result<Vec<f64>, ClassifierError> {
        let t = self.pooled_tensor(&[enc], None)?;
        Ok(t.to_dtype(DType::F64)?.i(0)?.to_vec1::<f64>()?)
    }

    /// Head weight (4 rows of `hidden` values, row-major) and bias.
    pub fn head_params(&self) -> Result<(Vec<f64>, [f64; 4]), ClassifierError> {
        let w = self.head_var("weight")?.as_tensor().to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
        let b = self.head_var("bias")?.as_tensor().to_dtype(DType::F64)?.to_vec1::<f64>()?;
        Ok((w, [b[0], b[1], b[2], b[3]]))
    }

    pub fn set_head_params(&self, weight: &[f64], bias: [f64; 4]) -> Result<(), ClassifierError> {
        let h = self.hidden_size();
        if weight.len() != 4 * h {
            return Err(ClassifierError::Shape {
                expected: format!("{} head weights", 4 * h),
                got: weight.len().to_string(),
            });
        }
        let w: Vec<f32> = weight.iter().map(|&x| x as f32).collect();
        self.head_var("weight")?
            .set(&Tensor::from_vec(w, (4, h), &self.device)?)?;
        let b: Vec<f32> = bias.iter().map(|&x| x as f32).collect();
        self.head_var("bias")?.set(&Tensor::from_vec(b, 4, &self.device)?)?;
        Ok(())
    }

    pub fn zero_head(&self) -> Result<(), ClassifierError> {
        self.set_head_params(&vec![0.0; 4 * self.hidden_size()], [0.0; 4])
    }

    fn head_var(&self, which: &str) -> Result<candle_core::Var, ClassifierError> {
        let data = self.varmap.data().lock().expect("varmap lock");
        Ok(data
            .get(&format!("{HEAD_PREFIX}.{which}"))
            .expect("head parameters are always declared")
            .clone())
    }

    /// All parameters as f32 vectors keyed by name, for equality checks.
    pub fn parameters(&self) -> Result<Vec<(String, Vec<f32>)>, ClassifierError> {
        let data = self.varmap.data().lock().expect("varmap lock");
        let mut out = Vec::with_capacity(data.len());
        for (name, var) in data.iter() {
            out.push((name.clone(), var.as_tensor().flatten_all()?.to_vec1::<f32>()?));
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(
    path: &Path,
    component: &'static str,
) -> Result<T, ClassifierError> {
    let bytes = std::fs::read(path).map_err(|e| ClassifierError::Load {
        component,
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    serde_json::from_slice(&bytes).map_err(|e| ClassifierError::Load {
        component,
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn read_pretrained(dir: &Path, device: &Device) -> Result<HashMap<String, Tensor>, ClassifierError> {
    let st = dir.join("model.safetensors");
    let pth = dir.join("pytorch_model.bin");
    let fail = |path: &Path, e: candle_core::Error| ClassifierError::Load {
        component: "encoder weights",
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    if st.is_file() {
        candle_core::safetensors::load(&st, device).map_err(|e| fail(&st, e))
    } else if pth.is_file() {
        let pairs = candle_core::pickle::read_all(&pth).map_err(|e| fail(&pth, e))?;
        Ok(pairs.into_iter().collect())
    } else {
        Err(ClassifierError::Load {
            component: "encoder weights",
            path: dir.to_path_buf(),
            message: "neither model.safetensors nor pytorch_model.bin present".into(),
        })
    }
}

/// Writes weights and configuration into `dir` (created if needed).
pub fn save_model(model: &ModelHandle, dir: impl AsRef<Path>) -> Result<(), ClassifierError> {
    let dir = dir.as_ref();
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ClassifierError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let weights = dir.join(WEIGHTS_FILE);
    let tmp = dir.join(format!(".{WEIGHTS_FILE}.tmp"));
    model.varmap.save(&tmp)?;
    std::fs::rename(&tmp, &weights).map_err(io(&weights))?;
    let config = serde_json::to_vec_pretty(&model.config).expect("config serializes");
    let path = dir.join(CONFIG_FILE);
    fsutil::write_atomic(&path, &config).map_err(io(&path))
}

/// Restores a model written by [`save_model`].
pub fn load_model(dir: impl AsRef<Path>) -> Result<ModelHandle, ClassifierError> {
    let dir = dir.as_ref();
    let config_path = dir.join(CONFIG_FILE);
    let weights = dir.join(WEIGHTS_FILE);
    for (path, component) in [(&config_path, "model config"), (&weights, "model weights")] {
        if !path.is_file() {
            return Err(ClassifierError::Load {
                component,
                path: path.to_path_buf(),
                message: "file not found".into(),
            });
        }
    }
    let config: ModelConfig = read_json(&config_path, "model config")?;
    let model = ModelHandle::declare(config)?;
    let tensors = candle_core::safetensors::load(&weights, &model.device).map_err(|e| {
        ClassifierError::Load {
            component: "model weights",
            path: weights.clone(),
            message: e.to_string(),
        }
    })?;
    {
        let data = model.varmap.data().lock().expect("varmap lock");
        for (name, var) in data.iter() {
            let component = if name.starts_with(HEAD_PREFIX) {
                "classification head"
            } else {
                "model weights"
            };
            let fail = |message: String| ClassifierError::Load {
                component,
                path: weights.clone(),
                message,
            };
            let t = tensors
                .get(name)
                .ok_or_else(|| fail(format!("missing tensor {name}")))?;
            if t.dims() != var.dims() {
                return Err(fail(format!(
                    "{name} has shape {:?}, expected {:?}",
                    t.dims(),
                    var.dims()
                )));
            }
            var.set(t)?;
        }
    }
    Ok(model)
}

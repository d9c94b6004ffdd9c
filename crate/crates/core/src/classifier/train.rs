use candle_core::{DType, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::Dropout;
use super::{ClassifierError, ModelHandle, TrainConfig};
use crate::corpus::{Corpus, LabelSet};
use crate::encode::{encode_batch, EncodedReview, EncoderVocab};

/// One encoded review with its gold labels.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub encoding: EncodedReview,
    pub labels: LabelSet,
}

/// Encodes every entry of `corpus`.
pub fn examples_from(corpus: &Corpus, vocab: &EncoderVocab) -> Vec<TrainExample> {
    encode_batch(&corpus.texts(), vocab)
        .into_iter()
        .zip(corpus.label_sets())
        .map(|(encoding, labels)| TrainExample { encoding, labels })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-review loss over the epoch's training steps.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

fn targets(batch: &[&TrainExample], model: &ModelHandle) -> Result<Tensor, ClassifierError> {
    let y: Vec<f32> = batch
        .iter()
        .flat_map(|e| e.labels.flags().map(|f| if f { 1.0 } else { 0.0 }))
        .collect();
    Ok(Tensor::from_vec(y, (batch.len(), 4), model.device())?)
}

/// Mean sigmoid cross-entropy over every (review, label) cell, in the
/// overflow-free form.
fn bce_with_logits(z: &Tensor, y: &Tensor) -> candle_core::Result<Tensor> {
    let softplus = z.abs()?.neg()?.exp()?.affine(1.0, 1.0)?.log()?;
    (z.relu()? - (z * y)?)?.add(&softplus)?.mean_all()
}

fn mean_loss(model: &ModelHandle, data: &[TrainExample]) -> Result<f64, ClassifierError> {
    let mut total = 0.0;
    for chunk in data.chunks(16) {
        let refs: Vec<&TrainExample> = chunk.iter().collect();
        let encs: Vec<&EncodedReview> = refs.iter().map(|e| &e.encoding).collect();
        let z = model.logits_tensor(&encs, None)?;
        let l = bce_with_logits(&z, &targets(&refs, model)?)?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
        total += l * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Fine-tunes every parameter with AdamW.
///
/// Each epoch visits the training set in a seeded random order; dropout is
/// active during training and off for the validation loss. Runs with the
/// same seed and inputs produce identical weights.
pub fn train(
    mut model: ModelHandle,
    train_set: &[TrainExample],
    val_set: &[TrainExample],
    cfg: &TrainConfig,
) -> Result<(ModelHandle, TrainLog), ClassifierError> {
    if train_set.is_empty() {
        return Err(ClassifierError::Argument("training set is empty".into()));
    }
    model.set_train_config(cfg.clone())?;
    for e in train_set.iter().chain(val_set) {
        model.check_input(&e.encoding)?;
    }
    let params = ParamsAdamW {
        lr: cfg.learning_rate,
        weight_decay: cfg.weight_decay,
        ..Default::default()
    };
    let mut opt = AdamW::new(model.varmap().all_vars(), params)?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout = Dropout::new(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = TrainLog::default();
    let step_size = cfg.batch_size * cfg.gradient_accumulation;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_total = 0.0;
        for (step, group) in order.chunks(step_size).enumerate() {
            let mut objective: Option<Tensor> = None;
            for micro in group.chunks(cfg.batch_size) {
                let batch: Vec<&TrainExample> = micro.iter().map(|&i| &train_set[i]).collect();
                let encs: Vec<&EncodedReview> = batch.iter().map(|e| &e.encoding).collect();
                let z = model.logits_tensor(&encs, Some(&mut dropout))?;
                let l = bce_with_logits(&z, &targets(&batch, &model)?)?;
                let value = l.to_dtype(DType::F64)?.to_scalar::<f64>()?;
                if !value.is_finite() {
                    return Err(ClassifierError::Numeric(format!(
                        "training loss {value} at epoch {epoch}, step {}",
                        step + 1
                    )));
                }
                epoch_total += value * micro.len() as f64;
                let weighted = (l * (micro.len() as f64 / group.len() as f64))?;
                objective = Some(match objective {
                    None => weighted,
                    Some(acc) => (acc + weighted)?,
                });
            }
            opt.backward_step(&objective.expect("non-empty group"))?;
        }
        let val_loss = if val_set.is_empty() {
            None
        } else {
            Some(mean_loss(&model, val_set)?)
        };
        log.epochs.push(EpochLog {
            epoch,
            train_loss: epoch_total / train_set.len() as f64,
            val_loss,
        });
    }
    Ok((model, log))
}

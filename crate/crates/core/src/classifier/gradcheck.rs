//! Numerical validation of the head and loss: the closed-form gradient
//! with respect to the head parameters against central finite differences,
//! both evaluated in f64 on the frozen encoder's `<s>` state.

use super::{loss, sigmoid, ClassifierError, LabelLogits, ModelHandle};
use crate::corpus::LabelSet;
use crate::encode::EncodedReview;

/// Finite-difference step.
pub const STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    /// Largest `|a - n| / max(|a|, |n|, 1e-8)` over all head parameters.
    pub max_relative_error: f64,
    /// Weight gradients (row-major, 4 × hidden) followed by the 4 bias
    /// gradients.
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

fn head_logits(h: &[f64], weight: &[f64], bias: &[f64; 4]) -> LabelLogits {
    let mut z = *bias;
    for (j, zj) in z.iter_mut().enumerate() {
        *zj += weight[j * h.len()..(j + 1) * h.len()]
            .iter()
            .zip(h)
            .map(|(w, x)| w * x)
            .sum::<f64>();
    }
    LabelLogits(z)
}

/// Loss of the head applied to pooled state `h`.
pub fn head_loss(
    h: &[f64],
    weight: &[f64],
    bias: &[f64; 4],
    target: &LabelSet,
) -> Result<f64, ClassifierError> {
    loss(&head_logits(h, weight, bias), target)
}

/// Closed form: `dL/dz_j = (sigmoid(z_j) - y_j) / 4`, so the weight
/// gradient is that times `h` and the bias gradient is that alone.
pub fn head_gradient(h: &[f64], weight: &[f64], bias: &[f64; 4], target: &LabelSet) -> Vec<f64> {
    let z = head_logits(h, weight, bias);
    let y = target.flags();
    let dz: Vec<f64> = (0..4)
        .map(|j| (sigmoid(z.0[j]) - if y[j] { 1.0 } else { 0.0 }) / 4.0)
        .collect();
    let mut grad: Vec<f64> = dz
        .iter()
        .flat_map(|&d| h.iter().map(move |&x| d * x))
        .collect();
    grad.extend(&dz);
    grad
}

/// Central differences of [`head_loss`] for every head parameter.
pub fn numeric_gradient(
    h: &[f64],
    weight: &[f64],
    bias: &[f64; 4],
    target: &LabelSet,
) -> Result<Vec<f64>, ClassifierError> {
    let mut w = weight.to_vec();
    let mut b = *bias;
    let mut grad = Vec::with_capacity(w.len() + 4);
    for i in 0..w.len() {
        let orig = w[i];
        w[i] = orig + STEP;
        let plus = head_loss(h, &w, &b, target)?;
        w[i] = orig - STEP;
        let minus = head_loss(h, &w, &b, target)?;
        w[i] = orig;
        grad.push((plus - minus) / (2.0 * STEP));
    }
    for j in 0..4 {
        let orig = b[j];
        b[j] = orig + STEP;
        let plus = head_loss(h, &w, &b, target)?;
        b[j] = orig - STEP;
        let minus = head_loss(h, &w, &b, target)?;
        b[j] = orig;
        grad.push((plus - minus) / (2.0 * STEP));
    }
    Ok(grad)
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Compares the analytic head gradient with finite differences for one
/// review, with the encoder held fixed.
pub fn gradient_check(
    model: &ModelHandle,
    enc: &EncodedReview,
    target: &LabelSet,
) -> Result<GradientReport, ClassifierError> {
    let h = model.pooled(enc)?;
    let (weight, bias) = model.head_params()?;
    let analytic = head_gradient(&h, &weight, &bias, target);
    let numeric = numeric_gradient(&h, &weight, &bias, target)?;
    let max_relative_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max);
    Ok(GradientReport {
        max_relative_error,
        analytic,
        numeric,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{EncoderConfig, ModelSource, TrainConfig};
    use super::*;
    use crate::corpus::Label;
    use crate::encode::{demo::demo_vocab, encode_review};
    use candle_core::{DType, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model() -> (ModelHandle, crate::encode::EncoderVocab) {
        let vocab = demo_vocab().with_max_len(32).unwrap();
        let enc = EncoderConfig::tiny(vocab.vocab_size(), 32, vocab.pad_id(), 2);
        let cfg = TrainConfig {
            max_len: 32,
            seed: 21,
            ..Default::default()
        };
        (ModelHandle::new(ModelSource::RandomInit(enc), cfg).unwrap(), vocab)
    }

    #[test]
    fn zero_head_matches_finite_differences() {
        let (m, vocab) = model();
        m.zero_head().unwrap();
        let enc = encode_review("Impossible de synchroniser ma montre", &vocab);
        let r = gradient_check(&m, &enc, &LabelSet::of(&[Label::BugReport])).unwrap();
        assert!(r.max_relative_error < 1e-4, "{}", r.max_relative_error);
        // bias gradient at zero logits is (1/2 - y) / 4
        let b = &r.analytic[r.analytic.len() - 4..];
        assert_eq!(b, [0.125, -0.125, 0.125, 0.125]);
    }

    #[test]
    fn random_heads_match_finite_differences() {
        let (m, vocab) = model();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let texts = ["Super", "bug à chaque ouverture", "ajoutez le mode hors ligne", "interface claire"];
        for case in 0..10 {
            let w: Vec<f64> = (0..4 * m.hidden_size()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = [0; 4].map(|_| rng.random_range(-1.0..1.0));
            m.set_head_params(&w, b).unwrap();
            let target = LabelSet::from_flags([0; 4].map(|_| rng.random_bool(0.5)));
            let enc = encode_review(texts[case % texts.len()], &vocab);
            let r = gradient_check(&m, &enc, &target).unwrap();
            assert!(r.max_relative_error < 1e-3, "case {case}: {}", r.max_relative_error);
        }
    }

    #[test]
    fn deterministic() {
        let (m, vocab) = model();
        let enc = encode_review("Très pratique", &vocab);
        let t = LabelSet::of(&[Label::Rating]);
        assert_eq!(
            gradient_check(&m, &enc, &t).unwrap().analytic,
            gradient_check(&m, &enc, &t).unwrap().analytic
        );
    }

    #[test]
    fn agrees_with_autograd() {
        let (m, vocab) = model();
        let enc = encode_review("La montre se déconnecte sans arrêt", &vocab);
        let target = LabelSet::of(&[Label::BugReport, Label::UserExperience]);
        let analytic = gradient_check(&m, &enc, &target).unwrap().analytic;

        let z = m.logits_tensor(&[&enc], None).unwrap();
        let y = Tensor::new(&[[0f32, 1.0, 0.0, 1.0]], m.device()).unwrap();
        let l = (z.relu().unwrap() - (&z * &y).unwrap())
            .unwrap()
            .add(&z.abs().unwrap().neg().unwrap().exp().unwrap().affine(1.0, 1.0).unwrap().log().unwrap())
            .unwrap()
            .mean_all()
            .unwrap();
        let grads = l.backward().unwrap();
        let data = m.varmap().data().lock().unwrap();
        let gw = grads.get(data["classifier.weight"].as_tensor()).unwrap();
        let gb = grads.get(data["classifier.bias"].as_tensor()).unwrap();
        let auto: Vec<f64> = gw
            .flatten_all()
            .unwrap()
            .to_dtype(DType::F64)
            .unwrap()
            .to_vec1::<f64>()
            .unwrap()
            .into_iter()
            .chain(gb.to_dtype(DType::F64).unwrap().to_vec1::<f64>().unwrap())
            .collect();
        for (a, g) in analytic.iter().zip(&auto) {
            assert!((a - g).abs() < 1e-5, "{a} vs {g}");
        }
    }
}

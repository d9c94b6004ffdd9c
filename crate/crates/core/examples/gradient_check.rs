//! Checks the closed-form head gradient of the multi-label loss against
//! central finite differences on a few reviews.

use anyhow::Result;
use avis::classifier::{gradient_check, loss, EncoderConfig, LabelLogits, ModelHandle, ModelSource, TrainConfig};
use avis::corpus::{Label, LabelSet};
use avis::encode::{demo::demo_vocab, encode_review};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run() -> Result<()> {
    let zero = loss(&LabelLogits([0.0; 4]), &LabelSet::of(&[Label::BugReport]))?;
    println!("loss at zero logits {zero:.12} (ln 2 = {:.12})", std::f64::consts::LN_2);

    let vocab = demo_vocab().with_max_len(32)?;
    let encoder = EncoderConfig::tiny(vocab.vocab_size(), 32, vocab.pad_id(), 2);
    let model = ModelHandle::new(
        ModelSource::RandomInit(encoder),
        TrainConfig { max_len: 32, ..TrainConfig::default() },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 4 * model.hidden_size();
    let cases = [
        ("L'appli plante dès l'ouverture", LabelSet::of(&[Label::BugReport])),
        ("Ajoutez un widget pour le sommeil", LabelSet::of(&[Label::FeatureRequest])),
        ("Navigation claire, bravo", LabelSet::of(&[Label::Rating, Label::UserExperience])),
    ];
    for (text, target) in cases {
        let weight: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
        let bias = std::array::from_fn(|_| rng.random_range(-0.5..0.5));
        model.set_head_params(&weight, bias)?;
        let report = gradient_check(&model, &encode_review(text, &vocab), &target)?;
        println!(
            "{text:<40} max relative error {:.2e} over {} parameters",
            report.max_relative_error,
            report.analytic.len()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}

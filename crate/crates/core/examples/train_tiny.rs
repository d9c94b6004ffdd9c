//! Fine-tunes a small randomly initialized encoder with the classification
//! head on a synthetic corpus, then saves, reloads and evaluates it.
//!
//! The same loop drives the pretrained French encoder: build the model with
//! `ModelSource::Pretrained("camembert-base".into())` and `AVIS_ASSETS`
//! pointing at the asset cache, and use its `tokenizer.json` vocabulary.

use anyhow::Result;
use avis::classifier::{examples_from, load_model, save_model, train, EncoderConfig, ModelHandle, ModelSource, TrainConfig};
use avis::corpus::synth;
use avis::encode::demo::demo_vocab;
use avis::evalx::{stratified_split, Fractions, MetricsReport, Part, RunMeta};

pub fn run() -> Result<()> {
    let corpus = synth::toy_corpus(&["Garmin Connect", "Huawei Health"], 60, 11);
    let vocab = demo_vocab().with_max_len(64)?;
    let cfg = TrainConfig {
        epochs: 4,
        learning_rate: 1e-3,
        max_len: 64,
        seed: 11,
        ..TrainConfig::default()
    };
    let encoder = EncoderConfig::tiny(vocab.vocab_size(), vocab.max_len(), vocab.pad_id(), 2);

    let split = stratified_split(&corpus, Fractions::default(), cfg.seed)?;
    let data = examples_from(&corpus, &vocab);
    let part = |p| split.indices(p).into_iter().map(|i| data[i].clone()).collect::<Vec<_>>();
    let (train_set, val_set, test_set) = (part(Part::Train), part(Part::Val), part(Part::Test));

    let model = ModelHandle::new(ModelSource::RandomInit(encoder), cfg.clone())?;
    let (model, log) = train(model, &train_set, &val_set, &cfg)?;
    for e in &log.epochs {
        println!("epoch {}  train {:.4}  val {:.4}", e.epoch, e.train_loss, e.val_loss.unwrap_or(f64::NAN));
    }

    let dir = tempfile::tempdir()?;
    save_model(&model, dir.path())?;
    let reloaded = load_model(dir.path())?;

    let inputs: Vec<_> = test_set.iter().map(|e| e.encoding.clone()).collect();
    let gold: Vec<_> = test_set.iter().map(|e| e.labels).collect();
    let pred = reloaded.predict_labels_batch(&inputs)?;
    assert_eq!(pred, model.predict_labels_batch(&inputs)?);
    let report = MetricsReport::evaluate(&gold, &pred, RunMeta::default())?;
    println!("\ntest part, reloaded model\n{}", report.table());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}

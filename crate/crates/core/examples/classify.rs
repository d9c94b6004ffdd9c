//! Labels new reviews with a trained model directory, as `avis classify`
//! does. Pass a directory written by `avis train` (its `model/`
//! subdirectory) to use a real model; otherwise a tiny one is trained first.

use std::path::{Path, PathBuf};

use anyhow::Result;
use avis::classifier::{examples_from, load_model, save_model, train, EncoderConfig, ModelHandle, ModelSource, TrainConfig};
use avis::corpus::synth;
use avis::encode::{demo::demo_vocab, encode_batch, EncoderVocab};

fn quick_model(dir: &Path) -> Result<()> {
    let corpus = synth::toy_corpus(&["Garmin Connect", "Huawei Health"], 60, 2);
    let vocab = demo_vocab().with_max_len(48)?;
    let cfg = TrainConfig { epochs: 4, learning_rate: 1e-3, max_len: 48, ..TrainConfig::default() };
    let encoder = EncoderConfig::tiny(vocab.vocab_size(), 48, vocab.pad_id(), 1);
    let model = ModelHandle::new(ModelSource::RandomInit(encoder), cfg.clone())?;
    let (model, _) = train(model, &examples_from(&corpus, &vocab), &[], &cfg)?;
    save_model(&model, dir)?;
    vocab.save(dir.join("tokenizer.json"))?;
    Ok(())
}

pub fn run(model_dir: Option<PathBuf>) -> Result<()> {
    let scratch = tempfile::tempdir()?;
    let dir = match model_dir {
        Some(d) => d,
        None => {
            quick_model(scratch.path())?;
            scratch.path().to_path_buf()
        }
    };
    let model = load_model(&dir)?;
    let vocab = EncoderVocab::load(dir.join("tokenizer.json"))?.with_max_len(model.max_len())?;
    let texts = [
        "Impossible de synchroniser ma montre depuis la dernière mise à jour",
        "Application géniale, je recommande",
        "Il faudrait pouvoir exporter les données en CSV",
        "Menus confus, on ne trouve rien",
    ];
    let probs = encode_batch(&texts, &vocab)
        .iter()
        .map(|e| model.predict_proba(e))
        .collect::<Result<Vec<_>, _>>()?;
    let threshold = model.train_config().threshold;
    for (text, p) in texts.iter().zip(probs) {
        let labels: Vec<&str> = avis::corpus::Label::ALL
            .iter()
            .filter(|l| p[l.index()] >= threshold)
            .map(|l| l.key())
            .collect();
        println!("{text}\n    p = {:.3?}  labels {labels:?}", p);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run(std::env::args().nth(1).map(PathBuf::from))
}

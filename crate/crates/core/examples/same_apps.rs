//! The same-apps protocol: repeated stratified splits over all apps, one
//! training run per seed, metrics averaged over runs.

use anyhow::Result;
use avis::classifier::{EncoderConfig, ModelSource, TrainConfig};
use avis::corpus::synth;
use avis::encode::demo::demo_vocab;
use avis::evalx::{run_experiment, ExperimentSpec, Protocol, RunReport};

pub fn run(runs: usize) -> Result<()> {
    let corpus = synth::toy_corpus(&["Garmin Connect", "Huawei Health", "Samsung Health"], 40, 5);
    let vocab = demo_vocab().with_max_len(48)?;
    let train = TrainConfig {
        epochs: 4,
        learning_rate: 1e-3,
        max_len: 48,
        ..TrainConfig::default()
    };
    let encoder = EncoderConfig::tiny(vocab.vocab_size(), vocab.max_len(), vocab.pad_id(), 1);
    let spec = ExperimentSpec {
        runs,
        base_seed: 100,
        ..ExperimentSpec::new(Protocol::SameApps, ModelSource::RandomInit(encoder), train)
    };
    let mut progress = |r: &RunReport| {
        println!(
            "{}: split {:?}, final loss {:.4}, weighted F1 {:.3}",
            r.file_stem(),
            r.split_sizes,
            r.train_log.epochs.last().map_or(f64::NAN, |e| e.train_loss),
            r.in_domain.weighted.f1
        );
        Ok(())
    };
    let outcome = run_experiment(&corpus, &spec, &vocab, &mut progress)?;
    println!("\nmean over {} runs\n{}", outcome.runs.len(), outcome.in_domain.table());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let runs = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(3);
    run(runs)
}

//! Cross-app generalization: train on two apps, test in-domain on their
//! held-back part and out-of-domain on every review of the third.

use anyhow::Result;
use avis::classifier::{EncoderConfig, ModelSource, TrainConfig};
use avis::corpus::synth;
use avis::encode::demo::demo_vocab;
use avis::evalx::{run_experiment, ExperimentSpec, Protocol, RunReport};

pub fn run(runs: usize) -> Result<()> {
    let corpus = synth::toy_corpus(&["Garmin Connect", "Huawei Health", "Samsung Health"], 40, 8);
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
        ..ExperimentSpec::new(Protocol::LeaveOneOut, ModelSource::RandomInit(encoder), train)
    };
    let mut progress = |r: &RunReport| {
        println!(
            "held out {:<15} run {} trained on {:?}",
            r.held_out.as_deref().unwrap_or("-"),
            r.run,
            r.train_apps
        );
        Ok(())
    };
    let outcome = run_experiment(&corpus, &spec, &vocab, &mut progress)?;
    println!();
    println!("{:<16}{:>14}{:>18}", "held out", "in-domain F1", "out-of-domain F1");
    for c in &outcome.combinations {
        println!(
            "{:<16}{:>14.3}{:>18.3}",
            c.held_out, c.in_domain.weighted.f1, c.out_domain.weighted.f1
        );
    }
    let out = outcome.out_domain.as_ref().expect("leave-one-out has out-of-domain results");
    println!(
        "{:<16}{:>14.3}{:>18.3}",
        "mean", outcome.in_domain.weighted.f1, out.weighted.f1
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let runs = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(2);
    run(runs)
}

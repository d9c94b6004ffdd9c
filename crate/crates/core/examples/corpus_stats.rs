//! Builds a labeled corpus, writes it to CSV, reads it back and prints the
//! per-app label table that `avis stats` shows.
//!
//! ```text
//! cargo run --example corpus_stats [path/to/corpus.csv]
//! ```
//!
//! Without an argument it uses a synthetic corpus carrying the published
//! per-app label counts.

use anyhow::Result;
use avis::cli::stats_table;
use avis::corpus::{label_counts, load_corpus, save_corpus, synth, Label, LabelSet};
use std::collections::BTreeMap;

pub fn run(path: Option<&str>) -> Result<()> {
    let corpus = match path {
        Some(p) => load_corpus(p)?,
        None => {
            let dir = tempfile::tempdir()?;
            let file = dir.path().join("surrogate.csv");
            save_corpus(&synth::table2_surrogate(1), &file)?;
            load_corpus(&file)?
        }
    };
    print!("{}", stats_table(&corpus));

    let total = label_counts(&corpus, None)?;
    println!("\nprevalence over {} reviews", total.total);
    for label in Label::ALL {
        println!("  {:<16} {:.3}", label.display_name(), total.get(label) as f64 / total.total as f64);
    }

    // most frequent label combinations
    let mut combos: BTreeMap<String, usize> = BTreeMap::new();
    for e in &corpus {
        *combos.entry(describe(&e.labels)).or_default() += 1;
    }
    let mut combos: Vec<_> = combos.into_iter().collect();
    combos.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    println!("\nlabel combinations");
    for (combo, n) in combos.iter().take(6) {
        println!("  {n:>5}  {combo}");
    }
    Ok(())
}

fn describe(labels: &LabelSet) -> String {
    labels.labels().map(|l| l.key()).collect::<Vec<_>>().join("+")
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let arg = std::env::args().nth(1);
    run(arg.as_deref())
}

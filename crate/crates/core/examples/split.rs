//! Stratified 60/20/20 split of a multi-label corpus, with per-part label
//! prevalence and the split digest recorded in run manifests.

use anyhow::Result;
use avis::corpus::{synth, Label};
use avis::evalx::{stratified_split, Fractions, Part};

pub fn run() -> Result<()> {
    let corpus = synth::table2_surrogate(3);
    let split = stratified_split(&corpus, Fractions::default(), 42)?;
    println!("seed {}  sizes {:?}", split.seed, split.sizes());
    println!("digest {}", split.digest());

    let share = |idx: &[usize], label: Label| {
        idx.iter().filter(|&&i| corpus.entries()[i].labels.get(label)).count() as f64 / idx.len() as f64
    };
    let all: Vec<usize> = (0..corpus.len()).collect();
    print!("\n{:<8}", "part");
    for label in Label::ALL {
        print!("{:>18}", label.display_name());
    }
    println!();
    let mut rows = vec![("all".to_string(), all)];
    rows.extend(Part::ALL.map(|p| (p.name().to_string(), split.indices(p))));
    for (name, idx) in &rows {
        print!("{name:<8}");
        for label in Label::ALL {
            print!("{:>18.4}", share(idx, label));
        }
        println!();
    }

    let first = &corpus.entries()[0];
    println!("\nreview {} is in the {} part", first.id(), split.part_of(first.id()).unwrap().name());
    let again = stratified_split(&corpus, Fractions::default(), 42)?;
    println!("same seed, same digest: {}", again.digest() == split.digest());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}

//! Per-label precision, recall and F1 with a support-weighted average, and
//! averaging several runs into one report.

use anyhow::Result;
use avis::corpus::{Label, LabelSet};
use avis::evalx::{aggregate, label_metrics, weighted_average, MetricsReport, RunMeta};

pub fn run() -> Result<()> {
    use Label::*;
    let gold = [
        LabelSet::of(&[Rating]),
        LabelSet::of(&[BugReport]),
        LabelSet::of(&[Rating, FeatureRequest]),
        LabelSet::of(&[UserExperience, BugReport]),
        LabelSet::of(&[Rating, UserExperience]),
        LabelSet::of(&[FeatureRequest]),
    ];
    let pred = [
        LabelSet::of(&[Rating]),
        LabelSet::of(&[BugReport, UserExperience]),
        LabelSet::of(&[Rating]),
        LabelSet::of(&[BugReport]),
        LabelSet::of(&[Rating, UserExperience]),
        LabelSet::of(&[FeatureRequest, Rating]),
    ];
    let meta = |run| RunMeta {
        protocol: "example".into(),
        run: Some(run),
        ..Default::default()
    };
    let first = MetricsReport::evaluate(&gold, &pred, meta(0))?;
    println!("run 0\n{}", first.table());

    let second = MetricsReport::evaluate(&gold, &gold, meta(1))?;
    let mean = aggregate(&[first, second])?;
    println!("mean of 2 runs\n{}", mean.table());

    // the weighted average from precomputed confusion counts
    let per_label = [
        label_metrics(Rating, 40, 6, 3),
        label_metrics(BugReport, 22, 2, 2),
        label_metrics(FeatureRequest, 9, 2, 2),
        label_metrics(UserExperience, 8, 2, 3),
    ];
    let w = weighted_average(&per_label)?;
    println!(
        "weighted from counts: P {:.3} R {:.3} F1 {:.3}",
        w.precision, w.recall, w.f1
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}

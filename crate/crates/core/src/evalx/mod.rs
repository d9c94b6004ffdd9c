//! Stratified splitting, metrics and the experiment protocols.

pub mod experiment;
pub mod metrics;
pub mod split;

use std::path::PathBuf;

use thiserror::Error;

use crate::classifier::ClassifierError;

pub use experiment::{
    run_experiment, run_leave_one_out, run_same_apps, CombinationSummary, ExperimentOutcome,
    ExperimentSpec, Protocol, RunReport,
};
pub use metrics::{
    aggregate, label_metrics, per_label_metrics, weighted_average, LabelMetrics, MetricsReport, RunMeta,
    WeightedMetrics,
};
pub use split::{stratified_split, Fractions, Part, SplitAssignment};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("review {0} is in both the training apps and the held-out app")]
    Leak(String),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

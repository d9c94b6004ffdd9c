//! Command-line surface: `ingest`, `stats`, `train`, `experiment` and
//! `classify`.
//!
//! Exit codes are a stable contract: 0 on success, 2 for usage,
//! configuration or data errors, 3 for runtime failures.

mod commands;
pub mod config;
pub mod manifest;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::classifier::ClassifierError;
use crate::corpus::CorpusError;
use crate::evalx::{EvalError, Protocol};
use crate::ingest::IngestError;

pub use commands::{cmd_classify, cmd_experiment, cmd_ingest, cmd_stats, cmd_train, stats_table};
pub use config::RunConfig;
pub use manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, configuration or missing inputs.
    #[error("{0}")]
    Usage(String),
    /// Input data that fails validation.
    #[error("{0}")]
    Data(String),
    /// Failure while doing the work.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Data(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ClassifierError> for CliError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::Config(_)
            | ClassifierError::Argument(_)
            | ClassifierError::Shape { .. }
            | ClassifierError::Load { .. } => CliError::Usage(e.to_string()),
            ClassifierError::Numeric(_) | ClassifierError::Io { .. } | ClassifierError::Tensor(_) => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Argument(m) => CliError::Usage(m),
            EvalError::Classifier(c) => c.into(),
            EvalError::Leak(_) | EvalError::Io { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::InvalidSpec(_)
            | IngestError::NotFound(_)
            | IngestError::Fixture(_)
            | IngestError::Export(_) => CliError::Usage(e.to_string()),
            IngestError::Transport { .. } | IngestError::RateLimited { .. } | IngestError::Protocol(_) => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "avis", version, about = "Multi-label classification of French app reviews")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fetch reviews of one app from Google Play into a raw pool file.
    Ingest(IngestArgs),
    /// Print per-app label counts of a labeled corpus.
    Stats(StatsArgs),
    /// Train once on a stratified split and evaluate on its test part.
    Train(RunArgs),
    /// Run a full evaluation protocol.
    Experiment(RunArgs),
    /// Label reviews with a trained model.
    Classify(ClassifyArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Store package identifier.
    #[arg(long = "app")]
    pub app_id: String,
    #[arg(long, default_value = "fr")]
    pub lang: String,
    #[arg(long, default_value_t = 1000)]
    pub max: usize,
    #[arg(long, default_value_t = 100)]
    pub page_size: usize,
    /// Requests per second.
    #[arg(long, default_value_t = 1.0)]
    pub rate: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Replay recorded responses instead of contacting the store.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub protocol: Option<Protocol>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub runs: Option<usize>,
}

impl RunArgs {
    /// The configuration file (or defaults) with flags applied.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(c) = &self.corpus {
            cfg.corpus = Some(c.clone());
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        if let Some(p) = self.protocol {
            cfg.protocol = p;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.runs {
            cfg.runs = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// File with one review per line, or a CSV pool with a `text` column.
    #[arg(long, conflicts_with = "text")]
    pub input: Option<PathBuf>,
    /// Review text; may be repeated.
    #[arg(long)]
    pub text: Vec<String>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Ingest(a) => cmd_ingest(a, out),
        Command::Stats(a) => cmd_stats(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Experiment(a) => cmd_experiment(a, out),
        Command::Classify(a) => cmd_classify(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

impl clap::ValueEnum for Protocol {
    fn value_variants<'a>() -> &'a [Self] {
        &[Protocol::SameApps, Protocol::LeaveOneOut]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        let alias = match self {
            Protocol::SameApps => "same-apps",
            Protocol::LeaveOneOut => "leave-one-out",
        };
        Some(clap::builder::PossibleValue::new(self.name()).alias(alias))
    }
}

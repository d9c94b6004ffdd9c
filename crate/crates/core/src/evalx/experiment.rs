//! The two evaluation protocols: repeated stratified splits over all apps,
//! and leave-one-app-out with in-domain and out-of-domain test sets.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::metrics::{aggregate, MetricsReport, RunMeta};
use super::split::{stratified_split, Fractions, Part};
use super::EvalError;
use crate::classifier::{
    examples_from, train, ModelHandle, ModelSource, TrainConfig, TrainExample, TrainLog,
};
use crate::corpus::{Corpus, LabelSet};
use crate::encode::{EncodedReview, EncoderVocab};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    SameApps,
    LeaveOneOut,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::SameApps => "same_apps",
            Protocol::LeaveOneOut => "leave_one_out",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "same_apps" | "same-apps" => Ok(Protocol::SameApps),
            "leave_one_out" | "leave-one-out" => Ok(Protocol::LeaveOneOut),
            other => Err(EvalError::Argument(format!(
                "unknown protocol {other:?}; expected same_apps or leave_one_out"
            ))),
        }
    }
}

/// What to run. Run `k` of a setting uses seed `base_seed + k` for the
/// split, the weight initialization and the training order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub protocol: Protocol,
    pub runs: usize,
    pub base_seed: u64,
    pub train: TrainConfig,
    pub fractions: Fractions,
    pub source: ModelSource,
}

impl ExperimentSpec {
    pub fn new(protocol: Protocol, source: ModelSource, train: TrainConfig) -> Self {
        ExperimentSpec {
            protocol,
            runs: 10,
            base_seed: 0,
            train,
            fractions: Fractions::default(),
            source,
        }
    }

    pub fn validate(&self, vocab: &EncoderVocab) -> Result<(), EvalError> {
        if self.runs < 1 {
            return Err(EvalError::Argument("runs must be at least 1".into()));
        }
        self.fractions.validate()?;
        self.train.validate()?;
        if vocab.max_len() != self.train.max_len {
            return Err(EvalError::Argument(format!(
                "vocabulary encodes to {} positions but max_len is {}",
                vocab.max_len(),
                self.train.max_len
            )));
        }
        Ok(())
    }

    pub fn seed(&self, run: usize) -> u64 {
        self.base_seed.wrapping_add(run as u64)
    }
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub protocol: Protocol,
    pub run: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub held_out: Option<String>,
    pub train_apps: Vec<String>,
    pub split_sizes: [usize; 3],
    pub split_digest: String,
    pub train_log: TrainLog,
    /// Metrics on the held-back test part of the training apps.
    pub in_domain: MetricsReport,
    /// Metrics on every review of the held-out app.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_domain: Option<MetricsReport>,
}

impl RunReport {
    /// File stem embedding protocol, held-out app, run index and seed.
    pub fn file_stem(&self) -> String {
        match &self.held_out {
            Some(app) => format!(
                "{}_{}_run{:02}_seed{}",
                self.protocol.name(),
                crate::corpus::slug(app),
                self.run,
                self.seed
            ),
            None => format!("{}_run{:02}_seed{}", self.protocol.name(), self.run, self.seed),
        }
    }
}

/// Mean metrics for one held-out app.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationSummary {
    pub held_out: String,
    pub train_apps: Vec<String>,
    pub in_domain: MetricsReport,
    pub out_domain: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub protocol: Protocol,
    pub runs: Vec<RunReport>,
    /// Leave-one-out only.
    pub combinations: Vec<CombinationSummary>,
    /// Mean over every run (same-apps result, or leave-one-out in-domain).
    pub in_domain: MetricsReport,
    /// Leave-one-out mean over every run on the held-out apps.
    pub out_domain: Option<MetricsReport>,
}

/// Called after each run, e.g. to persist its report.
pub type RunSink<'a> = dyn FnMut(&RunReport) -> Result<(), EvalError> + 'a;

fn evaluate(
    model: &ModelHandle,
    data: &[TrainExample],
    meta: RunMeta,
) -> Result<MetricsReport, EvalError> {
    let encs: Vec<EncodedReview> = data.iter().map(|e| e.encoding.clone()).collect();
    let pred = model.predict_labels_batch(&encs)?;
    let gold: Vec<LabelSet> = data.iter().map(|e| e.labels).collect();
    MetricsReport::evaluate(&gold, &pred, meta)
}

fn pick(data: &[TrainExample], idx: &[usize]) -> Vec<TrainExample> {
    idx.iter().map(|&i| data[i].clone()).collect()
}

struct Setting<'c> {
    corpus: &'c Corpus,
    examples: Vec<TrainExample>,
    held_out: Option<(String, Corpus, Vec<TrainExample>)>,
}

fn run_one(
    spec: &ExperimentSpec,
    setting: &Setting,
    run: usize,
) -> Result<RunReport, EvalError> {
    let seed = spec.seed(run);
    let split = stratified_split(setting.corpus, spec.fractions, seed)?;
    let train_set = pick(&setting.examples, &split.indices(Part::Train));
    let val_set = pick(&setting.examples, &split.indices(Part::Val));
    let test_set = pick(&setting.examples, &split.indices(Part::Test));
    let cfg = TrainConfig {
        seed,
        ..spec.train.clone()
    };
    let model = ModelHandle::new(spec.source.clone(), cfg.clone())?;
    let (model, train_log) = train(model, &train_set, &val_set, &cfg)?;

    let train_apps: Vec<String> = setting.corpus.apps().iter().cloned().collect();
    let held_name = setting.held_out.as_ref().map(|(app, _, _)| app.clone());
    let meta = |domain: Option<&str>, apps: Vec<String>| RunMeta {
        protocol: spec.protocol.name().into(),
        apps,
        domain: domain.map(String::from),
        held_out: held_name.clone(),
        run: Some(run),
        seed: Some(seed),
        runs: 1,
    };
    let in_domain = evaluate(
        &model,
        &test_set,
        meta(held_name.as_ref().map(|_| "in_domain"), train_apps.clone()),
    )?;
    let out_domain = match &setting.held_out {
        Some((app, _, data)) => Some(evaluate(&model, data, meta(Some("out_domain"), vec![app.clone()]))?),
        None => None,
    };
    Ok(RunReport {
        protocol: spec.protocol,
        run,
        seed,
        held_out: held_name,
        train_apps,
        split_sizes: split.sizes(),
        split_digest: split.digest(),
        train_log,
        in_domain,
        out_domain,
    })
}

/// Repeated stratified 60/20/20 splits over the whole corpus; the result is
/// the mean of the per-run test metrics.
pub fn run_same_apps(
    corpus: &Corpus,
    spec: &ExperimentSpec,
    vocab: &EncoderVocab,
    sink: &mut RunSink,
) -> Result<ExperimentOutcome, EvalError> {
    spec.validate(vocab)?;
    if corpus.apps().is_empty() {
        return Err(EvalError::Argument("corpus is empty".into()));
    }
    let setting = Setting {
        corpus,
        examples: examples_from(corpus, vocab),
        held_out: None,
    };
    let mut runs = Vec::with_capacity(spec.runs);
    for run in 0..spec.runs {
        let report = run_one(spec, &setting, run)?;
        sink(&report)?;
        runs.push(report);
    }
    let reports: Vec<MetricsReport> = runs.iter().map(|r| r.in_domain.clone()).collect();
    Ok(ExperimentOutcome {
        protocol: spec.protocol,
        in_domain: aggregate(&reports)?,
        runs,
        combinations: Vec::new(),
        out_domain: None,
    })
}

/// For each app: train on the other apps' split, test on their held-back
/// part (in-domain) and on every review of the held-out app (out-of-domain).
/// Grand means weight every run equally.
pub fn run_leave_one_out(
    corpus: &Corpus,
    spec: &ExperimentSpec,
    vocab: &EncoderVocab,
    sink: &mut RunSink,
) -> Result<ExperimentOutcome, EvalError> {
    spec.validate(vocab)?;
    let apps: Vec<&str> = corpus.apps().iter().map(String::as_str).collect();
    if apps.len() < 3 {
        return Err(EvalError::Argument(format!(
            "leave-one-out needs at least 3 apps, corpus has {}",
            apps.len()
        )));
    }
    let mut runs = Vec::new();
    let mut combinations = Vec::new();
    for &held in &apps {
        let others: Vec<&str> = apps.iter().copied().filter(|&a| a != held).collect();
        let sub = corpus.restrict_to_apps(&others);
        let outside = corpus.restrict_to_apps(&[held]);
        let train_ids: HashSet<&str> = sub.iter().map(|e| e.id()).collect();
        if let Some(e) = outside.iter().find(|e| train_ids.contains(e.id())) {
            return Err(EvalError::Leak(e.id().to_string()));
        }
        let setting = Setting {
            corpus: &sub,
            examples: examples_from(&sub, vocab),
            held_out: Some((held.to_string(), outside.clone(), examples_from(&outside, vocab))),
        };
        let mut in_reports = Vec::new();
        let mut out_reports = Vec::new();
        for run in 0..spec.runs {
            let report = run_one(spec, &setting, run)?;
            sink(&report)?;
            in_reports.push(report.in_domain.clone());
            out_reports.push(report.out_domain.clone().expect("held-out app evaluated"));
            runs.push(report);
        }
        combinations.push(CombinationSummary {
            held_out: held.to_string(),
            train_apps: others.iter().map(|s| s.to_string()).collect(),
            in_domain: aggregate(&in_reports)?,
            out_domain: aggregate(&out_reports)?,
        });
    }
    let in_all: Vec<MetricsReport> = runs.iter().map(|r| r.in_domain.clone()).collect();
    let out_all: Vec<MetricsReport> = runs
        .iter()
        .map(|r| r.out_domain.clone().expect("held-out app evaluated"))
        .collect();
    Ok(ExperimentOutcome {
        protocol: spec.protocol,
        in_domain: aggregate(&in_all)?,
        out_domain: Some(aggregate(&out_all)?),
        runs,
        combinations,
    })
}

pub fn run_experiment(
    corpus: &Corpus,
    spec: &ExperimentSpec,
    vocab: &EncoderVocab,
    sink: &mut RunSink,
) -> Result<ExperimentOutcome, EvalError> {
    match spec.protocol {
        Protocol::SameApps => run_same_apps(corpus, spec, vocab, sink),
        Protocol::LeaveOneOut => run_leave_one_out(corpus, spec, vocab, sink),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::EncoderConfig;
    use crate::corpus::synth;
    use crate::encode::demo::demo_vocab;

    fn spec(protocol: Protocol, runs: usize, vocab: &EncoderVocab) -> ExperimentSpec {
        let train = TrainConfig {
            epochs: 1,
            max_len: vocab.max_len(),
            learning_rate: 1e-3,
            ..Default::default()
        };
        let enc = EncoderConfig::tiny(vocab.vocab_size(), vocab.max_len(), vocab.pad_id(), 2);
        ExperimentSpec {
            runs,
            base_seed: 100,
            ..ExperimentSpec::new(protocol, ModelSource::RandomInit(enc), train)
        }
    }

    #[test]
    fn same_apps_smoke() {
        let vocab = demo_vocab().with_max_len(40).unwrap();
        let corpus = synth::toy_corpus(&["A", "B", "C"], 20, 1);
        let s = spec(Protocol::SameApps, 10, &vocab);
        let mut seen = Vec::new();
        let out = run_same_apps(&corpus, &s, &vocab, &mut |r| {
            seen.push(r.seed);
            Ok(())
        })
        .unwrap();
        assert_eq!(out.runs.len(), 10);
        assert_eq!(seen, (100..110).collect::<Vec<_>>());
        for r in &out.runs {
            assert_eq!(r.split_sizes, [36, 12, 12]);
            assert_eq!(r.in_domain.n_examples, 12);
            assert!(r.out_domain.is_none());
        }
        assert_eq!(out.in_domain.meta.runs, 10);
    }

    #[test]
    fn single_run_aggregate_equals_the_run() {
        let vocab = demo_vocab().with_max_len(40).unwrap();
        let corpus = synth::toy_corpus(&["A"], 30, 2);
        let out = run_same_apps(&corpus, &spec(Protocol::SameApps, 1, &vocab), &vocab, &mut |_| Ok(())).unwrap();
        assert_eq!(out.in_domain.per_label, out.runs[0].in_domain.per_label);
        assert_eq!(out.in_domain.weighted, out.runs[0].in_domain.weighted);
    }

    #[test]
    fn leave_one_out_smoke() {
        let vocab = demo_vocab().with_max_len(40).unwrap();
        let corpus = synth::toy_corpus(&["A", "B", "C"], 20, 3);
        let s = spec(Protocol::LeaveOneOut, 2, &vocab);
        let out = run_leave_one_out(&corpus, &s, &vocab, &mut |_| Ok(())).unwrap();
        assert_eq!(out.runs.len(), 6);
        assert_eq!(out.combinations.len(), 3);
        for r in &out.runs {
            let held = r.held_out.as_deref().unwrap();
            assert!(!r.train_apps.iter().any(|a| a == held));
            assert_eq!(r.out_domain.as_ref().unwrap().n_examples, 20);
            assert_eq!(r.split_sizes, [24, 8, 8]);
        }
        assert_eq!(out.out_domain.as_ref().unwrap().meta.runs, 6);
        let names: Vec<String> = out.runs.iter().map(|r| r.file_stem()).collect();
        assert_eq!(names.iter().collect::<HashSet<_>>().len(), 6);
    }

    #[test]
    fn leave_one_out_needs_three_apps() {
        let vocab = demo_vocab().with_max_len(40).unwrap();
        let corpus = synth::toy_corpus(&["A", "B"], 20, 3);
        let s = spec(Protocol::LeaveOneOut, 1, &vocab);
        assert!(matches!(
            run_leave_one_out(&corpus, &s, &vocab, &mut |_| Ok(())),
            Err(EvalError::Argument(_))
        ));
    }

    #[test]
    fn spec_validation() {
        let vocab = demo_vocab().with_max_len(40).unwrap();
        let mut s = spec(Protocol::SameApps, 0, &vocab);
        assert!(s.validate(&vocab).is_err());
        s.runs = 1;
        s.train.max_len = 64;
        assert!(s.validate(&vocab).is_err());
        assert_eq!("leave-one-out".parse::<Protocol>().unwrap(), Protocol::LeaveOneOut);
        assert!("kfold".parse::<Protocol>().is_err());
    }
}

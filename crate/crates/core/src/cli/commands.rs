use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::Utc;
use serde::Serialize;

use super::manifest::{sha256_file, write_bytes, write_json, CorpusRecord, RunManifest, SplitRecord};
use super::{ClassifyArgs, CliError, IngestArgs, RunArgs, RunConfig, StatsArgs};
use crate::classifier::{
    examples_from, load_model, save_model, train, ModelHandle, TrainConfig, TrainExample,
};
use crate::corpus::{label_counts, load_corpus, load_raw, Corpus, Label, LabelCounts};
use crate::encode::{encode_batch, EncoderVocab};
use crate::evalx::{
    run_experiment, stratified_split, ExperimentOutcome, MetricsReport, Part, Protocol, RunMeta,
};
use crate::ingest::{export_raw, FetchSpec, Fetcher, FixtureTransport, HttpTransport};

fn say(out: &mut dyn Write, line: impl AsRef<str>) -> Result<(), CliError> {
    writeln!(out, "{}", line.as_ref()).map_err(|e| CliError::Runtime(format!("stdout: {e}")))
}

pub fn cmd_ingest(args: &IngestArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = FetchSpec {
        app_id: args.app_id.clone(),
        language: args.lang.clone(),
        max_reviews: args.max,
        page_size: args.page_size,
        rate_limit: args.rate,
    };
    spec.validate()?;
    let reviews = match &args.fixtures {
        Some(path) => Fetcher::new(FixtureTransport::load(path)?).fetch(&spec)?,
        None => Fetcher::new(HttpTransport::new()?).fetch(&spec)?,
    };
    export_raw(&reviews, &args.out)?;
    say(
        out,
        format!("fetched {} reviews of {} into {}", reviews.len(), spec.app_id, args.out.display()),
    )
}

/// Per-app label count table with a totals row.
pub fn stats_table(corpus: &Corpus) -> String {
    let mut rows: Vec<(String, LabelCounts)> = corpus
        .apps()
        .iter()
        .map(|app| (app.clone(), label_counts(corpus, Some(app)).expect("app is in corpus")))
        .collect();
    let total = rows
        .iter()
        .fold(LabelCounts::default(), |acc, (_, c)| acc + *c);
    rows.push(("Total".into(), total));
    let mut s = format!("{:<24}{:>8}", "App", "Reviews");
    for l in Label::ALL {
        s += &format!("{:>18}", l.display_name());
    }
    s.push('\n');
    for (app, c) in rows {
        s += &format!("{app:<24}{:>8}", c.total);
        for n in c.counts {
            s += &format!("{n:>18}");
        }
        s.push('\n');
    }
    s
}

pub fn cmd_stats(args: &StatsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let corpus = load_corpus(&args.corpus)?;
    write!(out, "{}", stats_table(&corpus)).map_err(|e| CliError::Runtime(e.to_string()))
}

struct Inputs {
    cfg: RunConfig,
    out_dir: PathBuf,
    corpus: Corpus,
    record: CorpusRecord,
    vocab: EncoderVocab,
    source: crate::classifier::ModelSource,
}

fn prepare(args: &RunArgs) -> Result<Inputs, CliError> {
    let cfg = args.resolve()?;
    let corpus_path = cfg
        .corpus
        .clone()
        .ok_or_else(|| CliError::Usage("no corpus given (--corpus or `corpus` in the config)".into()))?;
    let out_dir = cfg
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("no output directory given (--out or `out` in the config)".into()))?;
    let before = sha256_file(&corpus_path)?;
    let corpus = load_corpus(&corpus_path)?;
    if sha256_file(&corpus_path)? != before {
        return Err(CliError::Runtime(format!(
            "{} changed while it was being read",
            corpus_path.display()
        )));
    }
    let (vocab, source) = cfg.resolve_model()?;
    Ok(Inputs {
        record: CorpusRecord {
            path: corpus_path,
            sha256: before,
            reviews: corpus.len(),
        },
        cfg,
        out_dir,
        corpus,
        vocab,
        source,
    })
}

fn config_value(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn pick(data: &[TrainExample], idx: &[usize]) -> Vec<TrainExample> {
    idx.iter().map(|&i| data[i].clone()).collect()
}

pub fn cmd_train(args: &RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let started = Utc::now();
    let inp = prepare(args)?;
    let cfg = &inp.cfg;
    let split = stratified_split(&inp.corpus, cfg.fractions, cfg.seed)?;
    let examples = examples_from(&inp.corpus, &inp.vocab);
    let train_set = pick(&examples, &split.indices(Part::Train));
    let val_set = pick(&examples, &split.indices(Part::Val));
    let test_set = pick(&examples, &split.indices(Part::Test));
    let tc = TrainConfig {
        seed: cfg.seed,
        ..cfg.train.clone()
    };
    say(
        out,
        format!(
            "training on {} reviews ({} val, {} test), seed {}",
            train_set.len(),
            val_set.len(),
            test_set.len(),
            cfg.seed
        ),
    )?;
    let model = ModelHandle::new(inp.source.clone(), tc.clone())?;
    let (model, log) = train(model, &train_set, &val_set, &tc)?;
    for e in &log.epochs {
        let val = e.val_loss.map_or("-".to_string(), |v| format!("{v:.4}"));
        say(out, format!("epoch {}: train loss {:.4}, val loss {val}", e.epoch, e.train_loss))?;
    }
    let preds = model.predict_labels_batch(&test_set.iter().map(|e| e.encoding.clone()).collect::<Vec<_>>())?;
    let gold: Vec<_> = test_set.iter().map(|e| e.labels).collect();
    let report = MetricsReport::evaluate(
        &gold,
        &preds,
        RunMeta {
            protocol: "train".into(),
            apps: inp.corpus.apps().iter().cloned().collect(),
            seed: Some(cfg.seed),
            run: Some(0),
            runs: 1,
            ..Default::default()
        },
    )?;

    let dir = &inp.out_dir;
    let model_dir = dir.join("model");
    save_model(&model, &model_dir)?;
    inp.vocab
        .save(model_dir.join("tokenizer.json"))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    write_json(&dir.join("split.json"), &split)?;
    write_json(&dir.join("train_log.json"), &log)?;
    write_json(&dir.join("metrics.json"), &report)?;
    let table = report.table();
    write_bytes(&dir.join("metrics.txt"), table.as_bytes())?;
    say(out, format!("\ntest metrics\n{table}"))?;

    let mut manifest = RunManifest::new("train", started, inp.record, config_value(cfg));
    manifest.seeds = vec![cfg.seed];
    manifest.splits = vec![SplitRecord {
        run: 0,
        seed: cfg.seed,
        held_out: None,
        sizes: split.sizes(),
        digest: split.digest(),
    }];
    manifest.outputs = [
        "model/model.safetensors",
        "model/model_config.json",
        "model/tokenizer.json",
        "split.json",
        "train_log.json",
        "metrics.json",
        "metrics.txt",
    ]
    .iter()
    .map(PathBuf::from)
    .collect();
    manifest.finish(dir)?;
    say(out, format!("wrote {}", dir.display()))
}

/// Aggregate document written as `aggregate.json`.
#[derive(Serialize)]
struct AggregateDoc<'a> {
    protocol: Protocol,
    runs: usize,
    in_domain: &'a MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    out_domain: Option<&'a MetricsReport>,
    combinations: &'a [crate::evalx::CombinationSummary],
}

/// Text rendering of an experiment's mean results.
pub fn render_outcome(o: &ExperimentOutcome) -> String {
    let n = o.runs.len();
    match o.protocol {
        Protocol::SameApps => format!(
            "Same apps: mean of {n} runs on the held-back test part\n\n{}",
            o.in_domain.table()
        ),
        Protocol::LeaveOneOut => {
            let mut s = format!(
                "Leave one app out: in-domain, mean of {n} runs on the held-back part of the training apps\n\n{}",
                o.in_domain.table()
            );
            if let Some(out) = &o.out_domain {
                s += &format!(
                    "\nLeave one app out: out-of-domain, mean of {n} runs on every review of the held-out app\n\n{}",
                    out.table()
                );
            }
            for c in &o.combinations {
                s += &format!(
                    "\nHeld out {} (trained on {})\n\nin-domain\n{}\nout-of-domain\n{}",
                    c.held_out,
                    c.train_apps.join(", "),
                    c.in_domain.table(),
                    c.out_domain.table()
                );
            }
            s
        }
    }
}

pub fn cmd_experiment(args: &RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let started = Utc::now();
    let inp = prepare(args)?;
    let cfg = &inp.cfg;
    if cfg.protocol == Protocol::LeaveOneOut && inp.corpus.apps().len() < 3 {
        return Err(CliError::Usage(format!(
            "leave_one_out requires at least 3 apps; the corpus has {}",
            inp.corpus.apps().len()
        )));
    }
    let spec = crate::evalx::ExperimentSpec {
        protocol: cfg.protocol,
        runs: cfg.runs,
        base_seed: cfg.seed,
        train: cfg.train.clone(),
        fractions: cfg.fractions,
        source: inp.source.clone(),
    };
    let dir = inp.out_dir.clone();
    let mut outputs: Vec<PathBuf> = Vec::new();
    let mut splits = Vec::new();
    let total = match cfg.protocol {
        Protocol::SameApps => cfg.runs,
        Protocol::LeaveOneOut => cfg.runs * inp.corpus.apps().len(),
    };
    let mut done = 0;
    let mut sink = |r: &crate::evalx::RunReport| -> Result<(), crate::evalx::EvalError> {
        let rel = PathBuf::from("runs").join(format!("{}.json", r.file_stem()));
        write_json(&dir.join(&rel), r).map_err(|e| crate::evalx::EvalError::Io {
            path: dir.join(&rel),
            source: std::io::Error::other(e.to_string()),
        })?;
        outputs.push(rel);
        splits.push(SplitRecord {
            run: r.run,
            seed: r.seed,
            held_out: r.held_out.clone(),
            sizes: r.split_sizes,
            digest: r.split_digest.clone(),
        });
        done += 1;
        let held = r.held_out.as_ref().map_or(String::new(), |h| format!(", held out {h}"));
        let out_f1 = r
            .out_domain
            .as_ref()
            .map_or(String::new(), |m| format!(", out-of-domain F1 {:.3}", m.weighted.f1));
        let _ = writeln!(
            out,
            "run {done}/{total} (seed {}{held}): weighted F1 {:.3}{out_f1}",
            r.seed, r.in_domain.weighted.f1
        );
        Ok(())
    };
    let outcome = run_experiment(&inp.corpus, &spec, &inp.vocab, &mut sink)?;
    let doc = AggregateDoc {
        protocol: outcome.protocol,
        runs: outcome.runs.len(),
        in_domain: &outcome.in_domain,
        out_domain: outcome.out_domain.as_ref(),
        combinations: &outcome.combinations,
    };
    write_json(&dir.join("aggregate.json"), &doc)?;
    let text = render_outcome(&outcome);
    write_bytes(&dir.join("report.txt"), text.as_bytes())?;
    say(out, format!("\n{text}"))?;
    outputs.push("aggregate.json".into());
    outputs.push("report.txt".into());

    let mut manifest = RunManifest::new("experiment", started, inp.record, config_value(cfg));
    manifest.seeds = (0..cfg.runs).map(|k| spec.seed(k)).collect();
    manifest.splits = splits;
    manifest.outputs = outputs;
    manifest.finish(&dir)?;
    say(out, format!("wrote {}", dir.display()))
}

#[derive(Serialize)]
struct Classified<'a> {
    text: &'a str,
    probabilities: serde_json::Map<String, serde_json::Value>,
    labels: Vec<&'static str>,
}

fn read_inputs(path: &Path) -> Result<Vec<String>, CliError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext.eq_ignore_ascii_case("csv") || ext.eq_ignore_ascii_case("tsv") {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        if text.trim().is_empty() {
            return Ok(Vec::new());
        }
        return Ok(load_raw(path)?.into_iter().map(|r| r.text).collect());
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect())
}

pub fn cmd_classify(args: &ClassifyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let texts = match &args.input {
        Some(p) => read_inputs(p)?,
        None if !args.text.is_empty() => args.text.clone(),
        None => return Err(CliError::Usage("give --input FILE or at least one --text".into())),
    };
    let model = load_model(&args.model)?;
    let vocab = EncoderVocab::load(args.model.join("tokenizer.json"))
        .and_then(|v| v.with_max_len(model.max_len()))
        .map_err(|e| CliError::Usage(format!("model tokenizer: {e}")))?;
    let encs = encode_batch(&texts, &vocab);
    let logits = model.predict_logits_batch(&encs)?;
    let threshold = model.train_config().threshold;
    let records: Vec<Classified> = texts
        .iter()
        .zip(&logits)
        .map(|(t, l)| {
            let p = l.probabilities();
            Classified {
                text: t,
                probabilities: Label::ALL
                    .iter()
                    .map(|lab| (lab.key().to_string(), serde_json::json!(p[lab.index()])))
                    .collect(),
                labels: l.labels(threshold).labels().map(|lab| lab.key()).collect(),
            }
        })
        .collect();
    let s = serde_json::to_string_pretty(&records).expect("records serialize");
    say(out, s)
}

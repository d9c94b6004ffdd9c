//! End-to-end runs of the command-line interface.

use std::path::{Path, PathBuf};

use avis::cli::{self, manifest::RunManifest, EXIT_OK, EXIT_USAGE};
use avis::corpus::{load_raw, save_corpus, synth};
use avis::ingest::transport::{encode_not_found, encode_page, FixtureTransport, Page, StoreReview};

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cli::run(std::iter::once("avis").chain(args.iter().copied()), &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TINY_CONFIG: &str = r#"
runs = 2
seed = 7

[model]
tokenizer = "demo"
[model.random_init]
layers = 1

[train]
epochs = 1
max_len = 32
learning_rate = 0.001
"#;

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(apps: &[&str], per_app: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&synth::toy_corpus(apps, per_app, 3), dir.path().join("corpus.csv")).unwrap();
        std::fs::write(dir.path().join("run.toml"), TINY_CONFIG).unwrap();
        Workspace { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn store_review(i: usize) -> StoreReview {
    StoreReview {
        id: format!("gp:{i}"),
        text: Some(format!("Avis numéro {i}, l'application plante au démarrage")),
        score: Some((i % 5 + 1) as u8),
        posted_at: Some(1_650_000_000 + i as i64),
    }
}

#[test]
fn ingest_from_fixtures_writes_a_pool() {
    let dir = tempfile::tempdir().unwrap();
    let first = Page {
        reviews: (0..3).map(store_review).collect(),
        next_token: Some("t1".into()),
    };
    let second = Page {
        reviews: (3..5).map(store_review).collect(),
        next_token: None,
    };
    let fixtures = dir.path().join("fixtures.json");
    FixtureTransport::default()
        .with_page("com.example.app:fr:-", encode_page(&first))
        .with_page("com.example.app:fr:t1", encode_page(&second))
        .with_page("com.missing:fr:-", encode_not_found())
        .save(&fixtures)
        .unwrap();
    let pool = dir.path().join("pool.csv");
    let (code, out, err) = run(&[
        "ingest", "--app", "com.example.app", "--max", "10", "--rate", "1000",
        "--out", p(&pool), "--fixtures", p(&fixtures),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("fetched 5 reviews"), "{out}");
    let reviews = load_raw(&pool).unwrap();
    assert_eq!(reviews.len(), 5);
    assert_eq!(reviews[0].app, "com.example.app");
    assert_eq!(reviews[4].store_score, Some(5));

    let (code, _, err) = run(&[
        "ingest", "--app", "com.missing", "--rate", "1000",
        "--out", p(&dir.path().join("none.csv")), "--fixtures", p(&fixtures),
    ]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("com.missing"), "{err}");
    assert!(!dir.path().join("none.csv").exists());
}

#[test]
fn stats_prints_one_row_per_app_and_a_total() {
    let ws = Workspace::new(&["Alpha", "Beta"], 20);
    let (code, out, _) = run(&["stats", "--corpus", p(&ws.path("corpus.csv"))]);
    assert_eq!(code, EXIT_OK);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 4, "{out}");
    assert!(lines[0].contains("Feature Request"));
    assert!(lines[1].starts_with("Alpha"));
    assert!(lines[2].starts_with("Beta"));
    let total: Vec<&str> = lines[3].split_whitespace().collect();
    assert_eq!(total[0], "Total");
    assert_eq!(total[1], "40");

    let (code, _, _) = run(&["stats", "--corpus", p(&ws.path("absent.csv"))]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn train_writes_artifacts_and_is_reproducible() {
    let ws = Workspace::new(&["Alpha", "Beta"], 15);
    let mut manifests = Vec::new();
    for name in ["a", "b"] {
        let out_dir = ws.path(name);
        let (code, out, err) = run(&[
            "train", "--corpus", p(&ws.path("corpus.csv")), "--config", p(&ws.path("run.toml")),
            "--out", p(&out_dir),
        ]);
        assert_eq!(code, EXIT_OK, "{err}");
        assert!(out.contains("epoch 1: train loss"), "{out}");
        assert!(out.contains("Weighted Average"), "{out}");
        for f in ["model/model.safetensors", "model/tokenizer.json", "split.json", "metrics.json", "metrics.txt"] {
            assert!(out_dir.join(f).is_file(), "missing {f}");
        }
        manifests.push(RunManifest::load(&out_dir).unwrap());
    }
    let (a, b) = (&manifests[0], &manifests[1]);
    assert_eq!(a.seeds, vec![7]);
    assert_eq!(a.splits, b.splits);
    assert_eq!(a.corpus.sha256, b.corpus.sha256);
    assert_eq!(a.splits[0].sizes.iter().sum::<usize>(), 30);
    assert_eq!(
        std::fs::read(ws.path("a/metrics.json")).unwrap(),
        std::fs::read(ws.path("b/metrics.json")).unwrap()
    );

    // classify with the trained model
    let (code, out, err) = run(&[
        "classify", "--model", p(&ws.path("a/model")),
        "--text", "L'appli plante sans arrêt", "--text", "Super", "--text", "Il manque le mode sombre",
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let parsed: serde_json::Value = serde_json::from_str(&out).unwrap();
    let items = parsed.as_array().unwrap();
    assert_eq!(items.len(), 3);
    for item in items {
        let probs = item["probabilities"].as_object().unwrap();
        assert_eq!(probs.len(), 4);
        assert!(probs.values().all(|v| (0.0..=1.0).contains(&v.as_f64().unwrap())));
    }

    let empty = ws.path("empty.txt");
    std::fs::write(&empty, "").unwrap();
    let (code, out, _) = run(&["classify", "--model", p(&ws.path("a/model")), "--input", p(&empty)]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.trim(), "[]");

    let (code, _, err) = run(&["classify", "--model", p(&ws.path("nowhere")), "--text", "x"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("model"), "{err}");
}

#[test]
fn train_requires_an_output_directory() {
    let ws = Workspace::new(&["Alpha"], 10);
    let (code, _, err) = run(&["train", "--corpus", p(&ws.path("corpus.csv")), "--config", p(&ws.path("run.toml"))]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("output"), "{err}");
}

#[test]
fn experiment_same_apps_writes_every_run() {
    let ws = Workspace::new(&["Alpha", "Beta"], 15);
    let out_dir = ws.path("exp");
    let (code, out, err) = run(&[
        "experiment", "--corpus", p(&ws.path("corpus.csv")), "--config", p(&ws.path("run.toml")),
        "--out", p(&out_dir), "--protocol", "same_apps",
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("run 2/2"), "{out}");
    let m = RunManifest::load(&out_dir).unwrap();
    assert_eq!(m.seeds, vec![7, 8]);
    assert_eq!(m.splits.len(), 2);
    assert_ne!(m.splits[0].digest, m.splits[1].digest);
    for f in &m.outputs {
        assert!(out_dir.join(f).is_file(), "missing {}", f.display());
    }
    assert!(out_dir.join("aggregate.json").is_file());
    assert!(std::fs::read_to_string(out_dir.join("report.txt")).unwrap().contains("mean of 2 runs"));
}

#[test]
fn leave_one_out_needs_three_apps() {
    let ws = Workspace::new(&["Alpha", "Beta"], 10);
    let (code, _, err) = run(&[
        "experiment", "--corpus", p(&ws.path("corpus.csv")), "--config", p(&ws.path("run.toml")),
        "--out", p(&ws.path("exp")), "--protocol", "leave-one-out",
    ]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("at least 3 apps"), "{err}");
    assert!(!ws.path("exp").join("manifest.json").exists());
}

#[test]
fn binary_reports_usage_errors_with_exit_code_two() {
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_avis"))
        .args(["stats"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_USAGE));
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_avis"))
        .arg("--help")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_OK));
    let help = String::from_utf8(status.stdout).unwrap();
    for cmd in ["ingest", "stats", "train", "experiment", "classify"] {
        assert!(help.contains(cmd), "{help}");
    }
}

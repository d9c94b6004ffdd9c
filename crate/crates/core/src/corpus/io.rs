//! Delimiter-separated dataset files.
//!
//! Labeled files use the columns `id, app, text, rating, bug_report,
//! feature_request, user_experience` with 0/1 label cells, optionally
//! followed by `store_score, posted_at`. Raw (unlabeled) files use
//! `id, app, text, store_score, posted_at`. Files ending in `.tsv` are tab
//! separated, everything else is comma separated.

use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};

use super::{Corpus, CorpusError, Label, LabelSet, LabeledReview, Review};
use crate::fsutil;

const LABELED_HEADER: [&str; 7] = [
    "id",
    "app",
    "text",
    "rating",
    "bug_report",
    "feature_request",
    "user_experience",
];
const RAW_HEADER: [&str; 5] = ["id", "app", "text", "store_score", "posted_at"];

/// Options for [`load_corpus_with`].
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// App name for files without an `app` column. Defaults to the file stem.
    pub default_app: Option<String>,
}

/// Loads a labeled corpus, preserving row order.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    load_corpus_with(path, &LoadOptions::default())
}

pub fn load_corpus_with(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let rows = read_rows(path, opts, true)?;
    let mut entries = Vec::with_capacity(rows.len());
    for (row, (review, labels)) in rows.into_iter().enumerate() {
        let labels = labels.expect("labeled rows carry labels");
        if labels.is_empty() {
            return Err(CorpusError::EmptyLabels {
                row: row + 1,
                id: review.id,
            });
        }
        entries.push(LabeledReview::new(review, labels));
    }
    Corpus::new(entries)
}

/// Loads an unlabeled review file written by [`save_raw`].
pub fn load_raw(path: impl AsRef<Path>) -> Result<Vec<Review>, CorpusError> {
    let path = path.as_ref();
    let rows = read_rows(path, &LoadOptions::default(), false)?;
    Ok(rows.into_iter().map(|(r, _)| r).collect())
}

/// Writes a corpus so that [`load_corpus`] reproduces it exactly.
pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let with_meta = corpus
        .iter()
        .any(|e| e.review.store_score.is_some() || e.review.posted_at.is_some());
    let mut header: Vec<&str> = LABELED_HEADER.to_vec();
    if with_meta {
        header.extend(["store_score", "posted_at"]);
    }
    let rows = corpus.iter().map(|e| {
        let r = &e.review;
        let mut row = vec![r.id.clone(), r.app.clone(), r.text.clone()];
        row.extend(e.labels.flags().map(|f| if f { "1" } else { "0" }.to_string()));
        if with_meta {
            row.push(score_cell(r.store_score));
            row.push(date_cell(r.posted_at));
        }
        row
    });
    write_table(path, &header, rows)
}

/// Writes unlabeled reviews (the labeled format minus label columns).
pub fn save_raw(reviews: &[Review], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let rows = reviews.iter().map(|r| {
        vec![
            r.id.clone(),
            r.app.clone(),
            r.text.clone(),
            score_cell(r.store_score),
            date_cell(r.posted_at),
        ]
    });
    write_table(path.as_ref(), &RAW_HEADER, rows)
}

fn score_cell(score: Option<u8>) -> String {
    score.map(|s| s.to_string()).unwrap_or_default()
}

fn date_cell(at: Option<DateTime<Utc>>) -> String {
    at.map(|t| t.to_rfc3339_opts(SecondsFormat::AutoSi, true))
        .unwrap_or_default()
}

fn delimiter(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("tsv") => b'\t',
        _ => b',',
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_table(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<(), CorpusError> {
    let mut writer = csv::WriterBuilder::new()
        .delimiter(delimiter(path))
        .from_writer(Vec::new());
    let to_io = |e: csv::Error| io_err(path, std::io::Error::other(e));
    writer.write_record(header).map_err(to_io)?;
    for row in rows {
        writer.write_record(&row).map_err(to_io)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| io_err(path, std::io::Error::other(e.to_string())))?;
    fsutil::write_atomic(path, &bytes).map_err(|e| io_err(path, e))
}

/// Column positions resolved from a header row.
struct Columns {
    id: Option<usize>,
    app: Option<usize>,
    text: usize,
    labels: Option<[usize; 4]>,
    store_score: Option<usize>,
    posted_at: Option<usize>,
    width: usize,
}

fn normalize_header(name: &str) -> String {
    name.trim()
        .trim_start_matches('\u{feff}')
        .to_lowercase()
        .replace([' ', '-'], "_")
}

fn find(header: &[String], names: &[&str]) -> Option<usize> {
    header.iter().position(|h| names.contains(&h.as_str()))
}

fn label_aliases(label: Label) -> &'static [&'static str] {
    match label {
        Label::Rating => &["rating", "r"],
        Label::BugReport => &["bug_report", "bug", "b"],
        Label::FeatureRequest => &["feature_request", "feature", "f"],
        Label::UserExperience => &["user_experience", "experience", "ux", "u"],
    }
}

impl Columns {
    fn resolve(path: &Path, raw: &csv::StringRecord, labeled: bool) -> Result<Self, CorpusError> {
        let header: Vec<String> = raw.iter().map(normalize_header).collect();
        let schema = |message: String| CorpusError::Schema {
            path: path.to_path_buf(),
            row: 0,
            message,
        };
        let text = find(&header, &["text", "review", "content", "comment"])
            .ok_or_else(|| schema("missing `text` column".into()))?;
        let labels = if labeled {
            let mut cols = [0; 4];
            for label in Label::ALL {
                cols[label.index()] = find(&header, label_aliases(label))
                    .ok_or_else(|| schema(format!("missing `{}` column", label.key())))?;
            }
            Some(cols)
        } else {
            None
        };
        Ok(Columns {
            id: find(&header, &["id", "review_id"]),
            app: find(&header, &["app", "application", "app_name"]),
            text,
            labels,
            store_score: find(&header, &["store_score", "score"]),
            posted_at: find(&header, &["posted_at", "at", "date"]),
            width: header.len(),
        })
    }
}

/// Lowercase slug used for synthesized ids, e.g. `garmin-connect`.
pub fn slug(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    for c in name.chars() {
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    out.trim_end_matches('-').to_string()
}

fn read_rows(
    path: &Path,
    opts: &LoadOptions,
    labeled: bool,
) -> Result<Vec<(Review, Option<LabelSet>)>, CorpusError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter(path))
        .flexible(true)
        .has_headers(false)
        .from_reader(bytes.as_slice());
    let mut records = reader.records();
    let Some(header) = records.next() else {
        return Ok(Vec::new());
    };
    let header = header.map_err(|e| CorpusError::Schema {
        path: path.to_path_buf(),
        row: 0,
        message: e.to_string(),
    })?;
    let cols = Columns::resolve(path, &header, labeled)?;
    let default_app = opts.default_app.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });

    let mut out = Vec::new();
    for (i, record) in records.enumerate() {
        let row = i + 1;
        let schema = |message: String| CorpusError::Schema {
            path: path.to_path_buf(),
            row,
            message,
        };
        let record = record.map_err(|e| schema(e.to_string()))?;
        if record.len() != cols.width {
            return Err(schema(format!(
                "expected {} columns, found {}",
                cols.width,
                record.len()
            )));
        }
        let cell = |c: usize| record.get(c).unwrap_or("");
        let app = cols.app.map(|c| cell(c).to_string()).unwrap_or_else(|| default_app.clone());
        let id = match cols.id {
            Some(c) => cell(c).to_string(),
            None => format!("{}-{}", slug(&app), i),
        };
        if id.is_empty() {
            return Err(schema("empty id".into()));
        }
        let store_score = match cols.store_score.map(cell).filter(|s| !s.trim().is_empty()) {
            None => None,
            Some(s) => Some(
                s.trim()
                    .parse::<u8>()
                    .ok()
                    .filter(|v| (1..=5).contains(v))
                    .ok_or_else(|| schema(format!("store score `{s}` is not an integer 1-5")))?,
            ),
        };
        let posted_at = match cols.posted_at.map(cell).filter(|s| !s.trim().is_empty()) {
            None => None,
            Some(s) => Some(
                DateTime::parse_from_rfc3339(s.trim())
                    .map_err(|e| schema(format!("timestamp `{s}`: {e}")))?
                    .with_timezone(&Utc),
            ),
        };
        let labels = match cols.labels {
            None => None,
            Some(label_cols) => {
                let mut flags = [false; 4];
                for label in Label::ALL {
                    let raw = cell(label_cols[label.index()]);
                    flags[label.index()] = match raw.trim() {
                        "0" => false,
                        "1" => true,
                        other => {
                            return Err(schema(format!(
                                "label `{}` has non-binary value `{other}`",
                                label.key()
                            )))
                        }
                    };
                }
                Some(LabelSet::from_flags(flags))
            }
        };
        let review = Review {
            id,
            app,
            text: cell(cols.text).to_string(),
            store_score,
            posted_at,
        };
        review.validate(row)?;
        out.push((review, labels));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use std::path::PathBuf;
    use proptest::prelude::*;

    fn write(dir: &tempfile::TempDir, name: &str, content: &str) -> PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, content).unwrap();
        p
    }

    #[test]
    fn header_only_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "c.csv", &(LABELED_HEADER.join(",") + "\n"));
        assert!(load_corpus(&p).unwrap().is_empty());
    }

    #[test]
    fn single_row_with_two_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "c.csv",
            "id,app,text,rating,bug_report,feature_request,user_experience\n\
             x1,Huawei Health,\"j'aimais bien, mais ça plante\",1,1,0,0\n",
        );
        let c = load_corpus(&p).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(
            c.entries()[0].labels,
            LabelSet::of(&[Label::Rating, Label::BugReport])
        );
        assert_eq!(c.entries()[0].text(), "j'aimais bien, mais ça plante");
    }

    #[test]
    fn schema_errors_name_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "c.csv",
            "id,app,text,rating,bug_report,feature_request,user_experience\n\
             a,A,ok,1,0,0,0\n\
             b,A,ok,1,0,0\n",
        );
        match load_corpus(&p).unwrap_err() {
            CorpusError::Schema { row, .. } => assert_eq!(row, 2),
            e => panic!("unexpected {e}"),
        }
        let p = write(
            &dir,
            "d.csv",
            "id,app,text,rating,bug_report,feature_request,user_experience\n\
             a,A,ok,1,0,2,0\n",
        );
        match load_corpus(&p).unwrap_err() {
            CorpusError::Schema { row, message, .. } => {
                assert_eq!(row, 1);
                assert!(message.contains("feature_request"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn all_zero_and_duplicate_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "c.csv",
            "id,app,text,rating,bug_report,feature_request,user_experience\n\
             a,A,ok,0,0,0,0\n",
        );
        assert!(matches!(
            load_corpus(&p).unwrap_err(),
            CorpusError::EmptyLabels { row: 1, .. }
        ));
        let p = write(
            &dir,
            "d.csv",
            "id,app,text,rating,bug_report,feature_request,user_experience\n\
             a,A,ok,1,0,0,0\na,A,ko,0,1,0,0\n",
        );
        assert!(matches!(
            load_corpus(&p).unwrap_err(),
            CorpusError::DuplicateId { .. }
        ));
    }

    #[test]
    fn synthesizes_ids_and_app_when_absent() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "Samsung Health.tsv",
            "review\tRating\tBug Report\tFeature Request\tUser Experience\n\
             Très bien\t1\t0\t0\t0\nNul\t1\t0\t0\t0\n",
        );
        let c = load_corpus(&p).unwrap();
        let ids: Vec<_> = c.iter().map(|e| e.id()).collect();
        assert_eq!(ids, ["samsung-health-0", "samsung-health-1"]);
        assert!(c.apps().contains("Samsung Health"));
    }

    #[test]
    fn missing_file_is_io_error_with_path() {
        let err = load_corpus("/nonexistent/corpus.csv").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/corpus.csv"));
    }

    #[test]
    fn empty_corpus_saves_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        save_corpus(&Corpus::default(), &p).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            LABELED_HEADER.join(",") + "\n"
        );
        let p = dir.path().join("r.csv");
        save_raw(&[], &p).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            RAW_HEADER.join(",") + "\n"
        );
    }

    #[test]
    fn metadata_columns_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = Review::new("m1", "Garmin Connect", "Super 👍\r\nmerci");
        r.store_score = Some(5);
        r.posted_at = Some(Utc.with_ymd_and_hms(2021, 3, 4, 5, 6, 7).unwrap());
        let c = Corpus::new(vec![LabeledReview::new(r, LabelSet::of(&[Label::Rating]))]).unwrap();
        let p = dir.path().join("m.csv");
        save_corpus(&c, &p).unwrap();
        assert_eq!(load_corpus(&p).unwrap(), c);
    }

    #[test]
    fn slugs() {
        assert_eq!(slug("Garmin Connect"), "garmin-connect");
        assert_eq!(slug("  Huawei--Health! "), "huawei-health");
    }

    fn arb_text() -> impl Strategy<Value = String> {
        // arbitrary unicode, plus the characters that stress quoting
        prop::collection::vec(
            prop_oneof![
                any::<char>().prop_map(|c| c.to_string()),
                Just(",".to_string()),
                Just("\"".to_string()),
                Just("\n".to_string()),
                Just("\r\n".to_string()),
                Just("\t".to_string()),
            ],
            1..40,
        )
        .prop_map(|parts| parts.concat())
        .prop_filter("non-blank", |s| !s.trim().is_empty())
    }

    proptest! {
        #[test]
        fn labeled_round_trip(
            texts in prop::collection::vec(arb_text(), 0..12),
            flags in prop::collection::vec(1u8..16, 12),
            tsv in any::<bool>(),
        ) {
            let entries = texts.iter().enumerate().map(|(i, t)| {
                let f = flags[i];
                LabeledReview::new(
                    Review::new(format!("id-{i}"), if i % 2 == 0 { "A, \"app\"" } else { "B" }, t.clone()),
                    LabelSet::from_flags([f & 1 != 0, f & 2 != 0, f & 4 != 0, f & 8 != 0]),
                )
            }).collect();
            let corpus = Corpus::new(entries).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join(if tsv { "c.tsv" } else { "c.csv" });
            save_corpus(&corpus, &p).unwrap();
            prop_assert_eq!(load_corpus(&p).unwrap(), corpus);
        }

        #[test]
        fn raw_round_trip(texts in prop::collection::vec(arb_text(), 0..12)) {
            let reviews: Vec<_> = texts.iter().enumerate().map(|(i, t)| {
                let mut r = Review::new(format!("gp:{i}"), "com.example.app", t.clone());
                r.store_score = Some((i % 5 + 1) as u8);
                r
            }).collect();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("raw.csv");
            save_raw(&reviews, &p).unwrap();
            prop_assert_eq!(load_raw(&p).unwrap(), reviews);
        }
    }
}

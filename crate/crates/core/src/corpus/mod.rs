//! Review corpora: data model, validation, counting, sampling and file IO.
//!
//! A [`Corpus`] is an ordered, immutable collection of [`LabeledReview`]s.
//! Every entry carries one or more of the four labels in [`Label`]; review
//! ids are unique within a corpus.

mod io;
pub mod reference;
pub mod synth;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use io::{load_corpus, load_corpus_with, load_raw, save_corpus, save_raw, slug, LoadOptions};

/// Errors raised while building, loading or querying a corpus.
#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: row {row}: {message}")]
    Schema {
        path: PathBuf,
        row: usize,
        message: String,
    },
    #[error("row {row}: review `{id}` carries no label")]
    EmptyLabels { row: usize, id: String },
    #[error("row {row}: review `{id}` has empty text")]
    EmptyText { row: usize, id: String },
    #[error("row {row}: review `{id}` has store score {score}, expected 1-5")]
    BadScore { row: usize, id: String, score: i64 },
    #[error("duplicate review id `{id}` at rows {first} and {second}")]
    DuplicateId {
        id: String,
        first: usize,
        second: usize,
    },
    #[error("app `{0}` is not present in the corpus")]
    UnknownApp(String),
    #[error("cannot sample {requested} reviews from a pool of {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// The four review categories, in the fixed order used by every label vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Rating,
    BugReport,
    FeatureRequest,
    UserExperience,
}

impl Label {
    pub const ALL: [Label; 4] = [
        Label::Rating,
        Label::BugReport,
        Label::FeatureRequest,
        Label::UserExperience,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Column / key name, e.g. `bug_report`.
    pub fn key(self) -> &'static str {
        match self {
            Label::Rating => "rating",
            Label::BugReport => "bug_report",
            Label::FeatureRequest => "feature_request",
            Label::UserExperience => "user_experience",
        }
    }

    /// Human-readable name, e.g. `Bug Report`.
    pub fn display_name(self) -> &'static str {
        match self {
            Label::Rating => "Rating",
            Label::BugReport => "Bug Report",
            Label::FeatureRequest => "Feature Request",
            Label::UserExperience => "User Experience",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

/// Which of the four labels apply to a review.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelSet {
    pub rating: bool,
    pub bug_report: bool,
    pub feature_request: bool,
    pub user_experience: bool,
}

impl LabelSet {
    pub fn from_flags(flags: [bool; 4]) -> Self {
        LabelSet {
            rating: flags[0],
            bug_report: flags[1],
            feature_request: flags[2],
            user_experience: flags[3],
        }
    }

    pub fn of(labels: &[Label]) -> Self {
        let mut set = LabelSet::default();
        for &label in labels {
            set.set(label, true);
        }
        set
    }

    pub fn flags(&self) -> [bool; 4] {
        [
            self.rating,
            self.bug_report,
            self.feature_request,
            self.user_experience,
        ]
    }

    pub fn get(&self, label: Label) -> bool {
        self.flags()[label.index()]
    }

    pub fn set(&mut self, label: Label, value: bool) {
        match label {
            Label::Rating => self.rating = value,
            Label::BugReport => self.bug_report = value,
            Label::FeatureRequest => self.feature_request = value,
            Label::UserExperience => self.user_experience = value,
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.flags().iter().any(|&f| f)
    }

    pub fn len(&self) -> usize {
        self.flags().iter().filter(|&&f| f).count()
    }

    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        Label::ALL.into_iter().filter(|&l| self.get(l))
    }

    /// `true` iff every label of `self` is also in `other`.
    pub fn is_subset(&self, other: &LabelSet) -> bool {
        self.labels().all(|l| other.get(l))
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.labels().map(Label::display_name).collect();
        if names.is_empty() {
            f.write_str("(none)")
        } else {
            f.write_str(&names.join(", "))
        }
    }
}

/// A single store review.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub id: String,
    pub app: String,
    pub text: String,
    pub store_score: Option<u8>,
    pub posted_at: Option<DateTime<Utc>>,
}

impl Review {
    pub fn new(id: impl Into<String>, app: impl Into<String>, text: impl Into<String>) -> Self {
        Review {
            id: id.into(),
            app: app.into(),
            text: text.into(),
            store_score: None,
            posted_at: None,
        }
    }

    fn validate(&self, row: usize) -> Result<(), CorpusError> {
        if self.text.trim().is_empty() {
            return Err(CorpusError::EmptyText {
                row,
                id: self.id.clone(),
            });
        }
        if let Some(score) = self.store_score {
            if !(1..=5).contains(&score) {
                return Err(CorpusError::BadScore {
                    row,
                    id: self.id.clone(),
                    score: score.into(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledReview {
    pub review: Review,
    pub labels: LabelSet,
}

impl LabeledReview {
    pub fn new(review: Review, labels: LabelSet) -> Self {
        LabeledReview { review, labels }
    }

    pub fn id(&self) -> &str {
        &self.review.id
    }

    pub fn app(&self) -> &str {
        &self.review.app
    }

    pub fn text(&self) -> &str {
        &self.review.text
    }
}

/// Validated, ordered collection of labeled reviews.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    entries: Vec<LabeledReview>,
    apps: BTreeSet<String>,
}

impl Corpus {
    /// Builds a corpus, enforcing non-empty text, non-empty label sets and
    /// unique ids. Rows in errors are 1-based entry positions.
    pub fn new(entries: Vec<LabeledReview>) -> Result<Self, CorpusError> {
        let mut seen: HashMap<&str, usize> = HashMap::with_capacity(entries.len());
        for (i, entry) in entries.iter().enumerate() {
            let row = i + 1;
            entry.review.validate(row)?;
            if entry.labels.is_empty() {
                return Err(CorpusError::EmptyLabels {
                    row,
                    id: entry.review.id.clone(),
                });
            }
            if let Some(first) = seen.insert(entry.id(), row) {
                return Err(CorpusError::DuplicateId {
                    id: entry.review.id.clone(),
                    first,
                    second: row,
                });
            }
        }
        let apps = entries.iter().map(|e| e.review.app.clone()).collect();
        Ok(Corpus { entries, apps })
    }

    pub fn entries(&self) -> &[LabeledReview] {
        &self.entries
    }

    pub fn apps(&self) -> &BTreeSet<String> {
        &self.apps
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledReview> {
        self.entries.iter()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.text()).collect()
    }

    pub fn label_sets(&self) -> Vec<LabelSet> {
        self.entries.iter().map(|e| e.labels).collect()
    }

    /// Entries whose app is in `apps`, order preserved.
    pub fn restrict_to_apps(&self, apps: &[&str]) -> Corpus {
        let entries: Vec<_> = self
            .entries
            .iter()
            .filter(|e| apps.contains(&e.app()))
            .cloned()
            .collect();
        let apps = entries.iter().map(|e| e.review.app.clone()).collect();
        Corpus { entries, apps }
    }

    /// Sub-corpus made of the entries at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Corpus {
        let entries: Vec<_> = indices.iter().map(|&i| self.entries[i].clone()).collect();
        let apps = entries.iter().map(|e| e.review.app.clone()).collect();
        Corpus { entries, apps }
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a LabeledReview;
    type IntoIter = std::slice::Iter<'a, LabeledReview>;

    fn into_iter(self) -> Self::IntoIter {
        self.entries.iter()
    }
}

/// Per-label positive counts over a set of reviews.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelCounts {
    pub total: usize,
    pub counts: [usize; 4],
}

impl LabelCounts {
    pub fn from_label_sets<'a>(sets: impl IntoIterator<Item = &'a LabelSet>) -> Self {
        let mut out = LabelCounts::default();
        for set in sets {
            out.total += 1;
            for label in set.labels() {
                out.counts[label.index()] += 1;
            }
        }
        out
    }

    pub fn get(&self, label: Label) -> usize {
        self.counts[label.index()]
    }
}

impl std::ops::Add for LabelCounts {
    type Output = LabelCounts;

    fn add(mut self, rhs: Self) -> Self {
        self.total += rhs.total;
        for (a, b) in self.counts.iter_mut().zip(rhs.counts) {
            *a += b;
        }
        self
    }
}

/// Counts reviews per label, optionally restricted to one app. Counts may sum
/// to more than `total` since reviews can carry several labels.
pub fn label_counts(corpus: &Corpus, app: Option<&str>) -> Result<LabelCounts, CorpusError> {
    if let Some(app) = app {
        if !corpus.apps().contains(app) {
            return Err(CorpusError::UnknownApp(app.to_string()));
        }
    }
    Ok(LabelCounts::from_label_sets(
        corpus
            .iter()
            .filter(|e| app.is_none_or(|a| e.app() == a))
            .map(|e| &e.labels),
    ))
}

/// Uniform sample of `n` reviews without replacement. The output order is the
/// sampling order, fixed for a given seed.
pub fn sample_reviews(pool: &[Review], n: usize, seed: u64) -> Result<Vec<Review>, CorpusError> {
    if n > pool.len() {
        return Err(CorpusError::SampleTooLarge {
            requested: n,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, pool.len(), n)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}

//! Fetching French reviews of an app from Google Play into a raw pool.
//!
//! Pages are requested newest first, one at a time, through a [`Transport`]
//! so tests can replay recorded responses. Requests are paced by a
//! [`RateLimiter`]; transient failures are retried with exponential backoff.

pub mod clock;
pub mod transport;

use std::collections::HashSet;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{save_raw, CorpusError, Review};

pub use clock::{Clock, ManualClock, RateLimiter, SystemClock};
pub use transport::{
    encode_not_found, encode_page, parse_page, FixtureTransport, HttpTransport, Page, PageRequest,
    RawResponse, StoreReview, Transport,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("invalid fetch spec: {0}")]
    InvalidSpec(String),
    #[error("app {0} not found on the store")]
    NotFound(String),
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: usize, message: String },
    #[error("still rate limited after {attempts} attempts")]
    RateLimited { attempts: usize },
    #[error("unexpected store response: {0}")]
    Protocol(String),
    #[error("fixture error: {0}")]
    Fixture(String),
    #[error(transparent)]
    Export(#[from] CorpusError),
}

/// What to fetch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchSpec {
    /// Store package identifier, e.g. `com.huawei.health`.
    pub app_id: String,
    #[serde(default = "default_language")]
    pub language: String,
    pub max_reviews: usize,
    #[serde(default = "default_page_size")]
    pub page_size: usize,
    /// Requests per second.
    #[serde(default = "default_rate")]
    pub rate_limit: f64,
}

fn default_language() -> String {
    "fr".into()
}
fn default_page_size() -> usize {
    100
}
fn default_rate() -> f64 {
    1.0
}

impl FetchSpec {
    pub fn new(app_id: impl Into<String>, max_reviews: usize) -> Result<Self, IngestError> {
        let spec = FetchSpec {
            app_id: app_id.into(),
            language: default_language(),
            max_reviews,
            page_size: default_page_size(),
            rate_limit: default_rate(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: String| Err(IngestError::InvalidSpec(m));
        if self.app_id.trim().is_empty() {
            return bad("app_id is empty".into());
        }
        if self.language.trim().is_empty() {
            return bad("language is empty".into());
        }
        if self.max_reviews < 1 {
            return bad("max_reviews must be at least 1".into());
        }
        if self.page_size < 1 {
            return bad("page_size must be at least 1".into());
        }
        if !(self.rate_limit > 0.0 && self.rate_limit.is_finite()) {
            return bad(format!("rate_limit {} must be positive", self.rate_limit));
        }
        Ok(())
    }
}

/// Retry policy for one page.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Attempts per page for network errors and 5xx responses.
    pub max_attempts: usize,
    /// Attempts per page while the server answers 429.
    pub max_rate_limited: usize,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            max_rate_limited: 8,
            initial_backoff: Duration::from_secs(1),
            max_backoff: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, failures: usize) -> Duration {
        let factor = 2u32.saturating_pow(failures.saturating_sub(1) as u32);
        self.initial_backoff
            .saturating_mul(factor)
            .min(self.max_backoff)
    }
}

/// Counters from one fetch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FetchStats {
    pub requests: usize,
    pub retries: usize,
    pub duplicates: usize,
    /// Rating-only reviews without text.
    pub skipped_empty: usize,
    /// Issue time of every request on the fetcher's clock.
    pub request_times: Vec<Duration>,
}

/// Paginating client over a transport and a clock.
pub struct Fetcher<T: Transport, C: Clock> {
    transport: T,
    clock: C,
    pub retry: RetryPolicy,
    stats: FetchStats,
}

impl<T: Transport> Fetcher<T, SystemClock> {
    pub fn new(transport: T) -> Self {
        Fetcher::with_clock(transport, SystemClock::default())
    }
}

impl<T: Transport, C: Clock> Fetcher<T, C> {
    pub fn with_clock(transport: T, clock: C) -> Self {
        Fetcher {
            transport,
            clock,
            retry: RetryPolicy::default(),
            stats: FetchStats::default(),
        }
    }

    pub fn stats(&self) -> &FetchStats {
        &self.stats
    }

    fn page(
        &mut self,
        req: &PageRequest,
        limiter: &mut RateLimiter,
    ) -> Result<Option<Page>, IngestError> {
        let mut failures = 0;
        let mut throttled = 0;
        loop {
            let t = limiter.acquire(&mut self.clock);
            self.stats.request_times.push(t);
            self.stats.requests += 1;
            let outcome = self.transport.send(req);
            let message = match outcome {
                Ok(resp) if resp.status == 200 => return parse_page(&resp.body),
                Ok(resp) if resp.status == 404 => return Ok(None),
                Ok(resp) if resp.status == 429 => {
                    throttled += 1;
                    if throttled >= self.retry.max_rate_limited {
                        return Err(IngestError::RateLimited { attempts: throttled });
                    }
                    self.stats.retries += 1;
                    let wait = self.retry.backoff(throttled);
                    self.clock.sleep(wait);
                    continue;
                }
                Ok(resp) if resp.status >= 500 => format!("HTTP {}", resp.status),
                Ok(resp) => {
                    return Err(IngestError::Transport {
                        attempts: failures + 1,
                        message: format!("HTTP {}", resp.status),
                    })
                }
                Err(e) => e.0,
            };
            failures += 1;
            if failures >= self.retry.max_attempts {
                return Err(IngestError::Transport {
                    attempts: failures,
                    message,
                });
            }
            self.stats.retries += 1;
            let wait = self.retry.backoff(failures);
            self.clock.sleep(wait);
        }
    }

    /// Up to `max_reviews` distinct reviews with text, newest first.
    pub fn fetch(&mut self, spec: &FetchSpec) -> Result<Vec<Review>, IngestError> {
        spec.validate()?;
        let mut limiter = RateLimiter::new(spec.rate_limit);
        let mut seen_ids = HashSet::new();
        let mut seen_tokens = HashSet::new();
        let mut out = Vec::new();
        let mut token: Option<String> = None;
        loop {
            let req = PageRequest {
                app_id: spec.app_id.clone(),
                language: spec.language.clone(),
                page_size: spec.page_size,
                token: token.clone(),
            };
            let Some(page) = self.page(&req, &mut limiter)? else {
                if token.is_none() {
                    return Err(IngestError::NotFound(spec.app_id.clone()));
                }
                break;
            };
            for r in page.reviews {
                if !seen_ids.insert(r.id.clone()) {
                    self.stats.duplicates += 1;
                    continue;
                }
                match r.into_review(&spec.app_id) {
                    Some(review) => out.push(review),
                    None => self.stats.skipped_empty += 1,
                }
                if out.len() == spec.max_reviews {
                    return Ok(out);
                }
            }
            match page.next_token {
                Some(t) if seen_tokens.insert(t.clone()) => token = Some(t),
                _ => break,
            }
        }
        Ok(out)
    }
}

/// Fetches with the live store transport and wall-clock pacing.
pub fn fetch_reviews(spec: &FetchSpec) -> Result<Vec<Review>, IngestError> {
    Fetcher::new(HttpTransport::new()?).fetch(spec)
}

/// Writes reviews as an unlabeled pool (`id,app,text,store_score,posted_at`).
pub fn export_raw(reviews: &[Review], path: impl AsRef<Path>) -> Result<(), IngestError> {
    Ok(save_raw(reviews, path)?)
}

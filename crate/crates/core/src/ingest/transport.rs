//! Store wire format and the transports that carry it.
//!
//! Google Play serves reviews through its `batchexecute` RPC endpoint. A
//! request names the `UsvDTd` procedure with the app id, page size, sort
//! order and an optional continuation token; the response is a JSON array,
//! after an anti-hijacking prefix, whose payload is itself a JSON string.

use std::cell::RefCell;
use std::collections::HashMap;
use std::path::Path;
use std::rc::Rc;
use std::time::Duration;

use chrono::DateTime;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::IngestError;
use crate::corpus::Review;

pub const ENDPOINT: &str = "https://play.google.com/_/PlayStoreUi/data/batchexecute";
const RPC_ID: &str = "UsvDTd";
/// Sort code for newest first.
const SORT_NEWEST: u8 = 2;
const PREFIX: &str = ")]}'";

/// One page request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageRequest {
    pub app_id: String,
    pub language: String,
    pub page_size: usize,
    pub token: Option<String>,
}

impl PageRequest {
    /// Fixture lookup key: `app:language:token`, with `-` for the first page.
    pub fn key(&self) -> String {
        format!(
            "{}:{}:{}",
            self.app_id,
            self.language,
            self.token.as_deref().unwrap_or("-")
        )
    }

    /// Value of the `f.req` form field.
    pub fn form_payload(&self) -> String {
        let token = match &self.token {
            Some(t) => Value::String(t.clone()),
            None => Value::Null,
        };
        let inner = json!([
            null,
            null,
            [2, SORT_NEWEST, [self.page_size, null, token], null, []],
            [self.app_id, 7]
        ]);
        json!([[[RPC_ID, inner.to_string(), null, "generic"]]]).to_string()
    }
}

/// Raw HTTP outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub status: u16,
    pub body: String,
}

/// Failures below the HTTP status level (DNS, TLS, timeouts).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkError(pub String);

pub trait Transport {
    fn send(&mut self, req: &PageRequest) -> Result<RawResponse, NetworkError>;
}

/// HTTPS transport to the live store.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
}

impl HttpTransport {
    pub fn new() -> Result<Self, IngestError> {
        Self::with_endpoint(ENDPOINT)
    }

    pub fn with_endpoint(endpoint: &str) -> Result<Self, IngestError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .user_agent(concat!("avis/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| IngestError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(HttpTransport {
            client,
            endpoint: endpoint.to_string(),
        })
    }
}

impl Transport for HttpTransport {
    fn send(&mut self, req: &PageRequest) -> Result<RawResponse, NetworkError> {
        let resp = self
            .client
            .post(&self.endpoint)
            .query(&[("hl", req.language.as_str())])
            .form(&[("f.req", req.form_payload())])
            .send()
            .map_err(|e| NetworkError(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| NetworkError(e.to_string()))?;
        Ok(RawResponse { status, body })
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
enum FixtureEntry {
    One(FixtureResponse),
    Many(Vec<FixtureResponse>),
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
enum FixtureResponse {
    Http(RawResponse),
    Network { network_error: String },
}

/// Replays recorded responses keyed by [`PageRequest::key`].
///
/// The fixture file is a JSON object mapping keys to a response
/// `{"status": 200, "body": "..."}`, to `{"network_error": "..."}`, or to a
/// list of those served in order (the last one repeats). Unknown keys get
/// a 404.
#[derive(Clone, Default)]
pub struct FixtureTransport {
    entries: HashMap<String, Vec<FixtureResponse>>,
    served: HashMap<String, usize>,
    log: Rc<RefCell<Vec<String>>>,
}

impl FixtureTransport {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| IngestError::Fixture(format!("{}: {e}", path.display())))?;
        let raw: HashMap<String, FixtureEntry> = serde_json::from_slice(&bytes)
            .map_err(|e| IngestError::Fixture(format!("{}: {e}", path.display())))?;
        let mut t = FixtureTransport::default();
        for (k, v) in raw {
            let list = match v {
                FixtureEntry::One(r) => vec![r],
                FixtureEntry::Many(rs) => rs,
            };
            if list.is_empty() {
                return Err(IngestError::Fixture(format!("key {k} has no responses")));
            }
            t.entries.insert(k, list);
        }
        Ok(t)
    }

    /// Serves `body` with status 200 for `key`.
    pub fn with_page(mut self, key: &str, body: String) -> Self {
        self.entries
            .entry(key.to_string())
            .or_default()
            .push(FixtureResponse::Http(RawResponse { status: 200, body }));
        self
    }

    pub fn with_status(mut self, key: &str, status: u16) -> Self {
        self.entries
            .entry(key.to_string())
            .or_default()
            .push(FixtureResponse::Http(RawResponse {
                status,
                body: String::new(),
            }));
        self
    }

    pub fn with_network_error(mut self, key: &str, message: &str) -> Self {
        self.entries
            .entry(key.to_string())
            .or_default()
            .push(FixtureResponse::Network {
                network_error: message.to_string(),
            });
        self
    }

    /// Keys of every request served so far, shared across clones.
    pub fn requests(&self) -> Vec<String> {
        self.log.borrow().clone()
    }

    /// Writes the fixture map back out in the loadable format.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IngestError> {
        let map: HashMap<&String, FixtureEntry> = self
            .entries
            .iter()
            .map(|(k, v)| (k, FixtureEntry::Many(v.clone())))
            .collect();
        let bytes = serde_json::to_vec_pretty(&map).expect("fixtures serialize");
        let path = path.as_ref();
        crate::fsutil::write_atomic(path, &bytes)
            .map_err(|e| IngestError::Fixture(format!("{}: {e}", path.display())))
    }
}

impl Transport for FixtureTransport {
    fn send(&mut self, req: &PageRequest) -> Result<RawResponse, NetworkError> {
        let key = req.key();
        self.log.borrow_mut().push(key.clone());
        let Some(list) = self.entries.get(&key) else {
            return Ok(RawResponse {
                status: 404,
                body: String::new(),
            });
        };
        let n = self.served.entry(key).or_insert(0);
        let r = &list[(*n).min(list.len() - 1)];
        *n += 1;
        match r {
            FixtureResponse::Http(resp) => Ok(resp.clone()),
            FixtureResponse::Network { network_error } => Err(NetworkError(network_error.clone())),
        }
    }
}

/// A parsed page.
#[derive(Debug, Clone, PartialEq)]
pub struct Page {
    pub reviews: Vec<StoreReview>,
    pub next_token: Option<String>,
}

/// A review as the store returns it, before conversion to [`Review`].
#[derive(Debug, Clone, PartialEq)]
pub struct StoreReview {
    pub id: String,
    pub text: Option<String>,
    pub score: Option<u8>,
    /// Unix seconds.
    pub posted_at: Option<i64>,
}

impl StoreReview {
    /// `None` for rating-only reviews without text.
    pub fn into_review(self, app_id: &str) -> Option<Review> {
        let text = self.text.filter(|t| !t.trim().is_empty())?;
        let mut r = Review::new(self.id, app_id, text);
        r.store_score = self.score.filter(|s| (1..=5).contains(s));
        r.posted_at = self.posted_at.and_then(|s| DateTime::from_timestamp(s, 0));
        Some(r)
    }
}

/// Parses a `batchexecute` response body. `Ok(None)` means the store knows
/// no such app.
pub fn parse_page(body: &str) -> Result<Option<Page>, IngestError> {
    let bad = |m: &str| IngestError::Protocol(m.to_string());
    let json_part = body.trim_start().strip_prefix(PREFIX).ok_or_else(|| bad("missing response prefix"))?;
    let outer: Value = serde_json::from_str(json_part.trim_start())
        .map_err(|e| IngestError::Protocol(format!("outer envelope: {e}")))?;
    let payload = &outer[0][2];
    let Some(payload) = payload.as_str() else {
        return if payload.is_null() {
            Ok(None)
        } else {
            Err(bad("payload is not a string"))
        };
    };
    let data: Value = serde_json::from_str(payload)
        .map_err(|e| IngestError::Protocol(format!("payload: {e}")))?;
    let items = data[0].as_array().cloned().unwrap_or_default();
    let mut reviews = Vec::with_capacity(items.len());
    for item in &items {
        let id = item[0]
            .as_str()
            .ok_or_else(|| bad("review without id"))?
            .to_string();
        reviews.push(StoreReview {
            id,
            text: item[4].as_str().map(str::to_string),
            score: item[2].as_u64().and_then(|s| u8::try_from(s).ok()),
            posted_at: item[5][0].as_i64(),
        });
    }
    let next_token = data
        .as_array()
        .and_then(|a| a.len().checked_sub(2).map(|i| &a[i]))
        .and_then(|v| v.as_array())
        .and_then(|v| v.last())
        .and_then(Value::as_str)
        .map(str::to_string);
    Ok(Some(Page {
        reviews,
        next_token,
    }))
}

/// Builds a response body in the store's format, for fixtures.
pub fn encode_page(page: &Page) -> String {
    let items: Vec<Value> = page
        .reviews
        .iter()
        .map(|r| {
            json!([
                r.id,
                ["Utilisateur", [null, 2, null, null, null, null, null, null, null, null]],
                r.score,
                null,
                r.text,
                r.posted_at.map(|s| json!([s, 0])),
                0,
                null,
                null,
                null,
                "1.0"
            ])
        })
        .collect();
    let token = match &page.next_token {
        Some(t) => json!([null, t]),
        None => json!([null]),
    };
    let data = json!([items, null, token, null]);
    let outer = json!([["wrb.fr", RPC_ID, data.to_string(), null, null, null, "generic"]]);
    format!("{PREFIX}\n\n{}", outer)
}

/// Body the store returns for an unknown app.
pub fn encode_not_found() -> String {
    let outer = json!([["wrb.fr", RPC_ID, null, null, null, [5], "generic"]]);
    format!("{PREFIX}\n\n{}", outer)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn review(id: &str, text: &str) -> StoreReview {
        StoreReview {
            id: id.into(),
            text: Some(text.into()),
            score: Some(4),
            posted_at: Some(1_650_000_000),
        }
    }

    #[test]
    fn page_round_trip() {
        let page = Page {
            reviews: vec![review("gp:1", "Très bien 👍"), review("gp:2", "Plante\nsouvent")],
            next_token: Some("CsQBCo".into()),
        };
        assert_eq!(parse_page(&encode_page(&page)).unwrap(), Some(page.clone()));
        let last = Page {
            next_token: None,
            ..page
        };
        assert_eq!(parse_page(&encode_page(&last)).unwrap(), Some(last));
        assert_eq!(parse_page(&encode_not_found()).unwrap(), None);
    }

    #[test]
    fn malformed_bodies_are_protocol_errors() {
        for body in ["<html>", ")]}'\n\n{", ")]}'\n\n[[\"wrb.fr\",\"UsvDTd\",\"[oops\"]]"] {
            assert!(matches!(parse_page(body), Err(IngestError::Protocol(_))), "{body}");
        }
    }

    #[test]
    fn request_payload_shape() {
        let req = PageRequest {
            app_id: "com.garmin.android.apps.connectmobile".into(),
            language: "fr".into(),
            page_size: 100,
            token: Some("tok".into()),
        };
        let outer: Value = serde_json::from_str(&req.form_payload()).unwrap();
        assert_eq!(outer[0][0][0], "UsvDTd");
        let inner: Value = serde_json::from_str(outer[0][0][1].as_str().unwrap()).unwrap();
        assert_eq!(inner[2][1], 2);
        assert_eq!(inner[2][2], json!([100, null, "tok"]));
        assert_eq!(inner[3][0], "com.garmin.android.apps.connectmobile");
        assert_eq!(req.key(), "com.garmin.android.apps.connectmobile:fr:tok");
    }

    #[test]
    fn rating_only_reviews_are_dropped() {
        let mut r = review("x", "  ");
        assert!(r.clone().into_review("app").is_none());
        r.text = Some("Bien".into());
        let rv = r.into_review("app").unwrap();
        assert_eq!(rv.store_score, Some(4));
        assert_eq!(rv.posted_at.unwrap().timestamp(), 1_650_000_000);
    }

    #[test]
    fn fixture_sequences_and_log() {
        let mut t = FixtureTransport::default()
            .with_status("a:fr:-", 503)
            .with_page("a:fr:-", encode_page(&Page { reviews: vec![], next_token: None }));
        let req = PageRequest {
            app_id: "a".into(),
            language: "fr".into(),
            page_size: 10,
            token: None,
        };
        assert_eq!(t.send(&req).unwrap().status, 503);
        assert_eq!(t.send(&req).unwrap().status, 200);
        assert_eq!(t.send(&req).unwrap().status, 200);
        let other = PageRequest { app_id: "b".into(), ..req };
        assert_eq!(t.send(&other).unwrap().status, 404);
        assert_eq!(t.requests().len(), 4);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fx.json");
        t.save(&path).unwrap();
        let mut back = FixtureTransport::load(&path).unwrap();
        let first = PageRequest { app_id: "a".into(), language: "fr".into(), page_size: 10, token: None };
        assert_eq!(back.send(&first).unwrap().status, 503);
    }
}

//! Run manifests: enough recorded state to replay a result.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::fsutil;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub path: PathBuf,
    /// SHA-256 of the file bytes that were read.
    pub sha256: String,
    pub reviews: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub run: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub held_out: Option<String>,
    pub sizes: [usize; 3],
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub corpus: CorpusRecord,
    pub seeds: Vec<u64>,
    pub config: serde_json::Value,
    pub splits: Vec<SplitRecord>,
    /// Files written by the run, relative to the output directory.
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, started_at: DateTime<Utc>, corpus: CorpusRecord, config: serde_json::Value) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            started_at,
            finished_at: started_at,
            corpus,
            seeds: Vec::new(),
            config,
            splits: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Stamps the finish time and writes `manifest.json` atomically.
    pub fn finish(mut self, dir: &Path) -> Result<Self, CliError> {
        self.finished_at = Utc::now();
        write_json(&dir.join(MANIFEST_FILE), &self)?;
        Ok(self)
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = std::fs::read(&path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Data(format!("invalid manifest {}: {e}", path.display())))
    }
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable output");
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", parent.display())))?;
    }
    fsutil::write_atomic(path, bytes)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("c.csv");
        std::fs::write(&data, "abc").unwrap();
        // sha256("abc")
        assert_eq!(
            sha256_file(&data).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let m = RunManifest::new(
            "train",
            Utc::now(),
            CorpusRecord { path: data, sha256: "x".into(), reviews: 3 },
            serde_json::json!({"seed": 1}),
        )
        .finish(dir.path())
        .unwrap();
        assert_eq!(RunManifest::load(dir.path()).unwrap(), m);
        assert!(m.finished_at >= m.started_at);
    }
}

//! Run manifests: the config echo plus content hashes of every emitted file.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::Result;

pub const TOOL: &str = "blowuplab";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Path relative to the run's output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileRecord {
    pub fn of(path: &str, content: &[u8]) -> Self {
        FileRecord { path: path.to_owned(), sha256: hex::encode(Sha256::digest(content)), bytes: content.len() as u64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub tool: String,
    pub version: String,
    /// RFC 3339.
    pub started: String,
    pub finished: String,
    pub files: Vec<FileRecord>,
    /// `None` for experiments without a verification step.
    pub passed: Option<bool>,
    pub summary: serde_json::Value,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn new(config: ExperimentConfig) -> Self {
        RunManifest {
            config,
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            started: now(),
            finished: String::new(),
            files: Vec::new(),
            passed: None,
            summary: serde_json::Value::Null,
            error: None,
        }
    }

    /// False when the run errored or a verification failed.
    pub fn ok(&self) -> bool {
        self.error.is_none() && self.passed != Some(false)
    }

    pub fn file(&self, path: &str) -> Option<&FileRecord> {
        self.files.iter().find(|f| f.path == path)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?)
    }
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_of_known_content() {
        let r = FileRecord::of("a.csv", b"abc");
        assert_eq!(r.sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(r.bytes, 3);
    }

    #[test]
    fn ok_reflects_error_and_verdict() {
        let mut m = RunManifest::new(ExperimentConfig::default());
        assert!(m.ok());
        m.passed = Some(false);
        assert!(!m.ok());
        m.passed = Some(true);
        m.error = Some("boom".into());
        assert!(!m.ok());
    }
}

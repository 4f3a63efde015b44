//! Run manifests embedded in every report.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL: &str = "wshare";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub role: String,
    /// Path as given, or `<builtin>` for bundled defaults.
    pub path: String,
    pub sha256: String,
}

/// Everything needed to reproduce a report. The timestamp is taken only from
/// `SOURCE_DATE_EPOCH` so that identical inputs give identical bytes.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub inputs: Vec<InputRecord>,
    pub options: serde_json::Value,
    pub seed: Option<u64>,
    pub source_date_epoch: Option<u64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(command: &str, options: serde_json::Value, seed: Option<u64>) -> Self {
        RunManifest {
            tool: TOOL,
            version: VERSION,
            command: command.to_string(),
            inputs: Vec::new(),
            options,
            seed,
            source_date_epoch: std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.trim().parse().ok()),
        }
    }

    pub fn add_input(&mut self, role: &str, path: Option<&Path>, bytes: &[u8]) {
        self.inputs.push(InputRecord {
            role: role.to_string(),
            path: path.map_or_else(|| "<builtin>".to_string(), |p| p.display().to_string()),
            sha256: sha256_hex(bytes),
        });
    }
}

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::commands::Artifact;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

impl OutputRecord {
    pub fn of(artifact: &Artifact) -> Self {
        Self { file: artifact.name.clone(), bytes: artifact.bytes.len(), sha256: sha256_hex(&artifact.bytes) }
    }
}

/// Written once per run, after every other artifact.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// The configuration as given, with flag overrides applied.
    pub config: Value,
    /// Every parameter after defaults were filled in.
    pub resolved: Value,
    pub threads: usize,
    pub wall_time_seconds: f64,
    pub status: &'static str,
    pub diagnostics: Vec<String>,
    pub outputs: Vec<OutputRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

//! Run manifests: what was run, on which input, and what it produced.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Fully resolved arguments; replaying them reproduces the outputs.
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub input: Option<InputRecord>,
    pub seed: u64,
    pub threads: usize,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub warnings: Vec<String>,
    /// Output file name to SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read(path: &Path) -> Result<Manifest, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("malformed manifest {}: {e}", path.display()))
}

pub fn write(dir: &Path, manifest: &Manifest) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(dir.join(MANIFEST_FILE), text)
}

//! Reproducibility manifest: config hash, seeds, input digests, stage
//! timings, and artifact paths, updated as stages complete.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use traveldist_core::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub seconds: f64,
    pub artifacts: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub root_seed: u64,
    pub version: String,
    /// sha-256 of the corpus inputs, recorded at ingest.
    pub input_digests: BTreeMap<String, String>,
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    Ok(sha256_hex(&bytes))
}

impl RunManifest {
    pub fn new(config_json: &str, root_seed: u64) -> RunManifest {
        RunManifest {
            config_hash: sha256_hex(config_json.as_bytes()),
            root_seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            input_digests: BTreeMap::new(),
            stages: BTreeMap::new(),
        }
    }

    pub fn path(out: &Path) -> PathBuf {
        out.join("manifest.json")
    }

    /// Loads the manifest for `out`, or starts a fresh one. A config-hash
    /// mismatch against an existing manifest is an error: mixing configs in
    /// one artifact tree breaks reproducibility.
    pub fn load_or_new(out: &Path, config_json: &str, root_seed: u64) -> Result<RunManifest> {
        let path = RunManifest::path(out);
        if !path.exists() {
            return Ok(RunManifest::new(config_json, root_seed));
        }
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CoreError::io(path.display().to_string(), e))?;
        let manifest: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CoreError::parse(path.display().to_string(), e.to_string()))?;
        if manifest.config_hash != sha256_hex(config_json.as_bytes()) {
            return Err(CoreError::Config(
                "output directory was produced with a different config; use a fresh --out".into(),
            ));
        }
        Ok(manifest)
    }

    pub fn record_stage(&mut self, name: &str, seconds: f64, artifacts: Vec<PathBuf>) {
        self.stages.insert(
            name.to_string(),
            StageRecord { seconds, artifacts },
        );
    }

    pub fn has_stage(&self, name: &str) -> bool {
        self.stages.contains_key(name)
    }

    pub fn save(&self, out: &Path) -> Result<()> {
        let path = RunManifest::path(out);
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CoreError::Validation(format!("serialize manifest: {e}")))?;
        std::fs::write(&path, text + "\n")
            .map_err(|e| CoreError::io(path.display().to_string(), e))
    }
}

//! Run manifests: everything needed to repeat a command and check its outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::failure::{Failure, PathContext};

/// A fully resolved command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Invocation {
    pub command: String,
    pub method: Option<String>,
    pub checkpoint: Option<PathBuf>,
    pub episodes: Option<usize>,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub invocation: Invocation,
    pub seed: u64,
    pub config: RunConfig,
    pub config_sha256: String,
    /// Files read by the run, with their hashes at the time.
    pub inputs: BTreeMap<PathBuf, String>,
    /// Files written into the output directory.
    pub outputs: BTreeMap<String, String>,
    /// Wall-clock seconds; not part of the reproducibility check.
    pub durations_s: BTreeMap<String, f64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<String, Failure> {
    Ok(sha256_hex(&std::fs::read(path).at(path)?))
}

pub fn config_hash(config: &RunConfig) -> String {
    sha256_hex(serde_json::to_string(config).expect("config serializes").as_bytes())
}

pub fn manifest_name(command: &str) -> String {
    format!("{command}.manifest.json")
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).at(path)?;
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: invalid manifest: {e}", path.display())))
    }

    pub fn write(&self, out: &Path) -> Result<PathBuf, Failure> {
        let path = out.join(manifest_name(&self.invocation.command));
        let text = serde_json::to_string_pretty(self).map_err(|e| Failure::new(1, e.to_string()))?;
        std::fs::write(&path, text + "\n").at(&path)?;
        Ok(path)
    }

    /// Input files whose contents changed since the manifest was written.
    pub fn changed_inputs(&self) -> Result<Vec<PathBuf>, Failure> {
        let mut changed = Vec::new();
        for (path, hash) in &self.inputs {
            if &hash_file(path)? != hash {
                changed.push(path.clone());
            }
        }
        Ok(changed)
    }

    /// Outputs in `out` that differ from (or are missing relative to) this manifest.
    pub fn differences(&self, other: &Manifest) -> Vec<String> {
        let mut diff = Vec::new();
        for (name, hash) in &self.outputs {
            match other.outputs.get(name) {
                Some(h) if h == hash => {}
                Some(_) => diff.push(format!("{name} differs")),
                None => diff.push(format!("{name} missing")),
            }
        }
        for name in other.outputs.keys().filter(|n| !self.outputs.contains_key(*n)) {
            diff.push(format!("{name} unexpected"));
        }
        diff
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = RunConfig::default();
        let b = RunConfig { seed: 1, ..Default::default() };
        assert_eq!(config_hash(&a), config_hash(&a.clone()));
        assert_ne!(config_hash(&a), config_hash(&b));
    }
}

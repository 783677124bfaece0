use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

impl FileHash {
    /// Hash `path`, recording it under `label`.
    pub fn of(path: &Path, label: String) -> Result<Self, String> {
        let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(FileHash {
            path: label,
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

/// What a command read, wrote and was configured with. Contains no
/// timestamps, so reruns produce identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig, seeds: BTreeMap<String, u64>) -> Self {
        Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            seeds,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), String> {
        self.inputs.push(FileHash::of(path, path.display().to_string())?);
        Ok(())
    }

    /// Record an output by its path relative to `out_dir`.
    pub fn output(&mut self, out_dir: &Path, path: &Path) -> Result<(), String> {
        let label = path.strip_prefix(out_dir).unwrap_or(path).display().to_string();
        self.outputs.push(FileHash::of(path, label)?);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<(), String> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| e.to_string())?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

//! Per-command run manifests: resolved config, seed and artifact digests.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config_sha256: String,
    pub config: Value,
    /// Path (relative to the work directory when inside it) to SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

fn display(path: &Path, root: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

impl RunManifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            config_sha256: cfg.hash(),
            config: cfg.to_json(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, cfg: &RunConfig, path: &Path) -> Result<()> {
        let h = sha256_file(path)?;
        self.inputs.insert(display(path, &cfg.paths.work_dir), h);
        Ok(())
    }

    pub fn output(&mut self, cfg: &RunConfig, path: &Path) -> Result<()> {
        let h = sha256_file(path)?;
        self.outputs.insert(display(path, &cfg.paths.work_dir), h);
        Ok(())
    }
}

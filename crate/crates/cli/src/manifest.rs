//! Run manifests: a JSON record of what was run, with what configuration
//! and inputs, and how long each phase took — enough to reproduce the run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub input_path: Option<String>,
    /// SHA-256 of the raw input bytes.
    pub input_sha256: Option<String>,
    pub phase_seconds: BTreeMap<String, f64>,
    /// Command-specific extras (e.g. scoring throughput).
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seed: None,
            input_path: None,
            input_sha256: None,
            phase_seconds: BTreeMap::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let digest = Sha256::digest(&bytes);
        self.input_path = Some(path.display().to_string());
        self.input_sha256 = Some(format!("{digest:x}"));
        Ok(())
    }

    pub fn phase(&mut self, name: &str, seconds: f64) {
        self.phase_seconds.insert(name.to_string(), seconds);
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Input(format!("manifest serialization: {e}")))?;
        std::fs::write(path, json)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }
}

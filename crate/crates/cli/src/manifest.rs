use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Everything needed to repeat a run. `config_text` is the file as read, so
/// a rerun does not depend on the original path still existing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config_path: String,
    pub config_text: String,
    pub model_hash: String,
    /// Seed given with `--seed`, if any.
    pub seed_override: Option<u64>,
    /// Seeds actually used.
    pub seeds: Vec<u64>,
    pub long_mode: bool,
    pub threads: Option<usize>,
    /// Model and experiment parameters after unit conversion (SI).
    pub resolved: serde_json::Value,
    pub outputs: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        nvcav::io::write_json(&dir.join(MANIFEST_FILE), self).map_err(CliError::from)
    }
}

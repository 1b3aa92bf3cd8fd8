use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use rgbt_core::trainer::{TrainConfig, KEYS};
use rgbt_core::Result;

pub const MANIFEST: &str = "manifest.json";
pub const CODE_DIGEST: &str = env!("SOD_CODE_DIGEST");

/// Provenance record written once per run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub code_digest: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

pub fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn config_snapshot(config: &TrainConfig) -> BTreeMap<String, String> {
    KEYS.iter()
        .map(|k| (k.to_string(), config.get(k).expect("known key")))
        .collect()
}

impl RunManifest {
    pub fn new(command: &str, config: &TrainConfig, started_unix: u64, inputs: &[&Path]) -> Self {
        Self {
            command: command.to_string(),
            config: config_snapshot(config),
            code_digest: CODE_DIGEST.to_string(),
            started_unix,
            finished_unix: started_unix,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: Vec::new(),
        }
    }

    /// Records `outputs` (relative to `dir`) and writes `dir/manifest.json`.
    pub fn finish(mut self, dir: &Path, outputs: &[&str]) -> Result<()> {
        self.finished_unix = now();
        self.outputs = outputs.iter().map(|s| s.to_string()).collect();
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&self)?)?;
        Ok(())
    }
}

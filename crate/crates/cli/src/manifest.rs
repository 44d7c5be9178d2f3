use std::path::{Path, PathBuf};

use neck_core::NeckConfig;
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSource {
    File { path: PathBuf },
    Synthetic { spec: String },
}

/// Written next to the outputs of every `forward` run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub precision: String,
    pub seed: u64,
    pub config: NeckConfig,
    pub input: Option<InputSource>,
    pub checkpoint: Option<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(config: &NeckConfig, precision: &str, input: Option<InputSource>) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            command: std::env::args().collect(),
            precision: precision.to_owned(),
            seed: config.seed,
            config: config.clone(),
            input,
            checkpoint: None,
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        self.write_to(&path)?;
        Ok(path)
    }

    /// Manifest for a report written to `report`: `<report>.manifest.json`.
    pub fn write_beside(&self, report: &Path) -> anyhow::Result<PathBuf> {
        let mut name = report.as_os_str().to_owned();
        name.push(".manifest.json");
        let path = PathBuf::from(name);
        self.write_to(&path)?;
        Ok(path)
    }

    fn write_to(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        neck_core::io::write_atomic(path, text.as_bytes())?;
        Ok(())
    }
}

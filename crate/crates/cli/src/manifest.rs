use std::path::{Path, PathBuf};

use facesr_core::{Error, Result};
use serde::{Deserialize, Serialize};
use toml::Table;

pub const MANIFEST_FILE: &str = "run_manifest.json";

/// Record of one command invocation. The stored config is the fully resolved
/// one, so `facesr replay <manifest>` reruns the command without other input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub config: Table,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: String,
    pub status: String,
    pub exit_code: i32,
    pub artifacts: Vec<PathBuf>,
    pub backend_cache: Option<PathBuf>,
    pub version: String,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Copy with the wall-clock fields blanked, for reproducibility checks.
    pub fn without_clock(&self) -> Self {
        RunManifest {
            started_at: String::new(),
            finished_at: String::new(),
            ..self.clone()
        }
    }
}

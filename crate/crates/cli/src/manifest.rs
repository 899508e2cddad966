//! Run manifests and the fixed output directory layout.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub const MAPS: &str = "maps";
pub const LOGS: &str = "logs";
pub const RESULTS: &str = "results";
pub const MANIFESTS: &str = "manifests";

/// Default map file inside an output directory.
pub fn default_map(out: &Path) -> PathBuf {
    out.join(MAPS).join("orchard.json")
}

/// `out/<sub>`, created if missing.
pub fn subdir(out: &Path, sub: &str) -> Result<PathBuf> {
    let dir = out.join(sub);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

pub fn unix_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Everything needed to re-run a command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub map: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
    /// Remaining flags as given.
    pub flags: serde_json::Value,
    /// Fingerprint of the resolved filter parameters, when the command uses them.
    pub params_fingerprint: Option<String>,
    pub started_unix_ms: u64,
    pub finished_unix_ms: Option<u64>,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, map: Option<PathBuf>, params: Option<PathBuf>, seed: u64, out: &Path) -> Self {
        Self {
            command: command.into(),
            map,
            params,
            seed,
            out: out.to_path_buf(),
            flags: serde_json::Value::Null,
            params_fingerprint: None,
            started_unix_ms: unix_ms(),
            finished_unix_ms: None,
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    /// Writes `out/manifests/<name>.json` and returns its path.
    pub fn write(&self, name: &str) -> Result<PathBuf> {
        let path = subdir(&self.out, MANIFESTS)?.join(format!("{name}.json"));
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn finish(&mut self, name: &str) -> Result<PathBuf> {
        self.finished_unix_ms = Some(unix_ms());
        self.write(name)
    }
}

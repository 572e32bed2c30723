use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::report::to_json;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to repeat a run. Contains no timestamps or host details
/// so that identical runs produce identical manifests.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<PathBuf>,
    /// Resolved device model and every flag value after defaults.
    pub parameters: BTreeMap<String, Value>,
    pub seed: u64,
    pub version: String,
    /// Output file names, relative to the manifest.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: Option<&Path>, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config: config.map(Path::to_path_buf),
            parameters: BTreeMap::new(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
        }
    }

    pub fn param<T: Serialize>(&mut self, key: &str, value: &T) -> &mut Self {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.parameters.insert(key.to_string(), v);
        self
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, to_json(self).map_err(std::io::Error::other)?)?;
        Ok(path)
    }
}

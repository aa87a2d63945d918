use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one successful run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub duration_secs: f64,
    /// Command-specific facts, e.g. the scaling of written images.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            config_hash: None,
            seed: None,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            duration_secs: 0.0,
            details: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) -> &mut Self {
        self.inputs.insert(name.to_string(), path.display().to_string());
        self
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.details
            .insert(key.to_string(), serde_json::to_value(value).expect("manifest detail serializes"));
        self
    }

    /// Check that every declared output exists and is non-empty, stamp the
    /// duration and write the manifest via a temporary file and a rename.
    pub fn finish(mut self, out_dir: &Path, started: Instant) -> Result<()> {
        for rel in &self.outputs {
            let path = out_dir.join(rel);
            let meta = fs::metadata(&path).with_context(|| format!("declared output {} was not written", path.display()))?;
            if meta.is_file() && meta.len() == 0 {
                anyhow::bail!("declared output {} is empty", path.display());
            }
        }
        self.duration_secs = started.elapsed().as_secs_f64();
        let tmp = out_dir.join(format!(".{MANIFEST_FILE}.tmp"));
        let mut text = serde_json::to_string_pretty(&self)?;
        text.push('\n');
        fs::write(&tmp, text).with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, out_dir.join(MANIFEST_FILE)).with_context(|| format!("renaming {}", tmp.display()))?;
        Ok(())
    }
}

/// Parse a JSON config; errors name the offending key.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        if key == "." {
            anyhow::anyhow!("{}: {}", path.display(), e.inner())
        } else {
            anyhow::anyhow!("{}: key `{key}`: {}", path.display(), e.inner())
        }
    })
}

/// Hex SHA-256 of a value's JSON serialization.
pub fn hash_json(value: &impl Serialize) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

//! Output files named from a hash of the resolved settings, plus a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub struct OutputSet {
    dir: PathBuf,
    command: &'static str,
    hash: String,
    settings: serde_json::Value,
    seed: Option<u64>,
    files: Vec<String>,
}

/// First 12 hex digits of the SHA-256 of the command name and its settings.
pub fn settings_hash(command: &str, settings: &serde_json::Value) -> String {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update(b"\n");
    h.update(settings.to_string().as_bytes());
    h.finalize().iter().take(6).map(|b| format!("{b:02x}")).collect()
}

impl OutputSet {
    pub fn new<S: Serialize>(dir: &Path, command: &'static str, settings: &S, seed: Option<u64>) -> Result<Self> {
        let settings = serde_json::to_value(settings)?;
        let hash = settings_hash(command, &settings);
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command,
            hash,
            settings,
            seed,
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, stem: &str, ext: &str, bytes: &[u8]) -> Result<PathBuf> {
        let name = format!("{stem}-{}.{ext}", self.hash);
        let path = self.dir.join(&name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(name);
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, stem: &str, value: &T) -> Result<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(stem, "json", &bytes)
    }

    /// Write the manifest listing every file written so far.
    pub fn finish(mut self) -> Result<Vec<PathBuf>> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            tool: &'static str,
            version: &'static str,
            command: &'a str,
            config_hash: &'a str,
            seed: Option<u64>,
            settings: &'a serde_json::Value,
            outputs: &'a [String],
        }
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config_hash: &self.hash,
            seed: self.seed,
            settings: &self.settings,
            outputs: &self.files,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        let name = format!("manifest-{}.json", self.hash);
        fs::write(self.dir.join(&name), bytes)?;
        self.files.push(name);
        Ok(self.files.iter().map(|f| self.dir.join(f)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_depends_on_settings_and_command() {
        let a = serde_json::json!({"k": 16});
        let b = serde_json::json!({"k": 17});
        assert_eq!(settings_hash("run", &a), settings_hash("run", &a));
        assert_ne!(settings_hash("run", &a), settings_hash("run", &b));
        assert_ne!(settings_hash("run", &a), settings_hash("scan-k", &a));
        assert_eq!(settings_hash("run", &a).len(), 12);
    }
}

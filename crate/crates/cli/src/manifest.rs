//! `manifest.json`: SHA-256 of every file a command writes into a run directory.
//!
//! Entries are keyed by file name and remember the hash of the config that
//! produced them. Writing a file again under the same config must reproduce
//! the recorded hash; anything else is reported as a determinism failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub sha256: String,
    pub command: String,
    pub config_sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_rad_per_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0_rad: Option<f64>,
    #[serde(default)]
    pub files: BTreeMap<String, FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Option<Self>, CliError> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    /// Files in the manifest whose current content no longer matches; missing files are skipped.
    pub fn verify_existing(&self, dir: &Path) -> Result<(), CliError> {
        for (name, entry) in &self.files {
            let path = dir.join(name);
            let Ok(bytes) = std::fs::read(&path) else {
                continue;
            };
            if sha256_hex(&bytes) != entry.sha256 {
                return Err(CliError::Data(format!(
                    "{} does not match its manifest hash (file was modified after it was written)",
                    path.display()
                )));
            }
        }
        Ok(())
    }
}

/// Collects the output of one command and writes it together with the manifest.
pub struct RunWriter {
    dir: PathBuf,
    command: &'static str,
    config_sha256: String,
    manifest: Manifest,
}

impl RunWriter {
    pub fn open(dir: &Path, command: &'static str, config_sha256: String) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let manifest = Manifest::load(dir)?.unwrap_or_default();
        Ok(Self {
            dir: dir.to_path_buf(),
            command,
            config_sha256,
            manifest,
        })
    }

    pub fn manifest_mut(&mut self) -> &mut Manifest {
        &mut self.manifest
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let sha256 = sha256_hex(bytes);
        if let Some(old) = self.manifest.files.get(name) {
            if old.config_sha256 == self.config_sha256 && old.sha256 != sha256 {
                return Err(CliError::Data(format!(
                    "rerun of `{}` with an identical config produced a different {name}",
                    self.command
                )));
            }
        }
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.manifest.files.insert(
            name.to_string(),
            FileEntry {
                sha256,
                command: self.command.to_string(),
                config_sha256: self.config_sha256.clone(),
            },
        );
        Ok(())
    }

    pub fn finish(self) -> Result<Manifest, CliError> {
        let path = self.dir.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(self.manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandEntry {
    pub command: String,
    pub started_unix: u64,
    pub wall_clock_secs: f64,
}

/// Inventory of a run directory. Paths are relative to the directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software_version: String,
    pub config: serde_json::Value,
    pub commands: Vec<CommandEntry>,
    pub files: BTreeMap<String, FileEntry>,
}

impl RunManifest {
    pub fn new(config: serde_json::Value) -> Self {
        Self {
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            commands: Vec::new(),
            files: BTreeMap::new(),
        }
    }

    /// Loads the manifest in `dir`, or starts a new one.
    pub fn load_or_new(dir: &Path, config: serde_json::Value) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::new(config));
        }
        let mut m = Self::load(dir)?;
        m.config = config;
        Ok(m)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path,
            line: e.line(),
            message: e.to_string(),
        })
    }

    /// Hashes `path` (inside `dir`) into the inventory.
    pub fn record_file(&mut self, dir: &Path, path: &Path) -> Result<()> {
        let rel = path
            .strip_prefix(dir)
            .map_err(|_| Error::InvalidInput(format!("{} is outside {}", path.display(), dir.display())))?;
        let entry = hash_file(path)?;
        self.files.insert(rel.to_string_lossy().replace('\\', "/"), entry);
        Ok(())
    }

    pub fn record_command(&mut self, command: &str, started: SystemTime) {
        let started_unix = started.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let wall_clock_secs = started.elapsed().map_or(0.0, |d| d.as_secs_f64());
        self.commands.push(CommandEntry {
            command: command.to_string(),
            started_unix,
            wall_clock_secs,
        });
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, json + "\n").map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        Ok(path)
    }

    /// Re-hashes every inventoried file. Missing or changed files are
    /// reported together.
    pub fn validate(&self, dir: &Path) -> Result<usize> {
        let mut offenders = Vec::new();
        for (rel, expected) in &self.files {
            match hash_file(&dir.join(rel)) {
                Ok(actual) if &actual == expected => {}
                Ok(_) => offenders.push(format!("{rel} (checksum mismatch)")),
                Err(_) => offenders.push(format!("{rel} (missing)")),
            }
        }
        if offenders.is_empty() {
            Ok(self.files.len())
        } else {
            Err(Error::Aggregation {
                message: format!("manifest check failed in {}", dir.display()),
                offenders,
            })
        }
    }
}

pub fn hash_file(path: &Path) -> Result<FileEntry> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(FileEntry {
        sha256: hex::encode(Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

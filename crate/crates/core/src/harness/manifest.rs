use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::checkpoint::write_atomic;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Aborted { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub artifact_version: String,
    pub seed: u64,
    pub start_step: u64,
    /// Number of steps fully applied.
    pub end_step: u64,
    pub status: RunStatus,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn new(config_hash: String, seed: u64) -> Self {
        RunManifest {
            config_hash,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            start_step: 0,
            end_step: 0,
            status: RunStatus::Completed,
            files: Vec::new(),
        }
    }

    /// Records a file that is already fully written.
    pub fn add_file(&mut self, run_dir: &Path, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let rel = path.strip_prefix(run_dir).unwrap_or(path);
        let rel = rel.to_string_lossy().replace('\\', "/");
        self.files.retain(|f| f.path != rel);
        self.files.push(FileEntry {
            path: rel,
            sha256: hex::encode(Sha256::digest(&bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn drop_file(&mut self, run_dir: &Path, path: &Path) {
        let rel = path.strip_prefix(run_dir).unwrap_or(path).to_string_lossy().replace('\\', "/");
        self.files.retain(|f| f.path != rel);
    }

    pub fn write(&self, run_dir: &Path) -> Result<PathBuf> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = serde_json::to_vec_pretty(self).expect("manifest serializes");
        write_atomic(&path, &text)?;
        Ok(path)
    }

    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_slice(&text).map_err(|e| Error::Parse {
            path,
            msg: e.to_string(),
        })
    }

    /// Re-hashes every listed file and reports the first mismatch.
    pub fn verify(&self, run_dir: &Path) -> Result<()> {
        for f in &self.files {
            let path = run_dir.join(&f.path);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let digest = hex::encode(Sha256::digest(&bytes));
            if digest != f.sha256 {
                return Err(Error::contract(format!("digest mismatch for {}", f.path)));
            }
        }
        Ok(())
    }
}

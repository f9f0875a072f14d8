//! Output files and their SHA-256 digests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Writes files into one directory and records each of them.
#[derive(Debug)]
pub struct ArtifactWriter {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl ArtifactWriter {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(ArtifactWriter { root: root.to_path_buf(), entries: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        std::fs::write(self.root.join(name), contents)?;
        self.entries.push(ManifestEntry { path: name.to_string(), bytes: contents.len(), sha256: hex::encode(Sha256::digest(contents)) });
        Ok(())
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    /// Write `manifest.json` listing every file written so far.
    pub fn finish(self) -> Result<Vec<ManifestEntry>> {
        let text = serde_json::to_string_pretty(&self.entries)?;
        std::fs::write(self.root.join(MANIFEST_NAME), text)?;
        Ok(self.entries)
    }
}

/// Recompute the digests of a finished output directory.
pub fn check_manifest(root: &Path) -> Result<bool> {
    let entries: Vec<ManifestEntry> = serde_json::from_str(&std::fs::read_to_string(root.join(MANIFEST_NAME))?)?;
    for e in &entries {
        let data = std::fs::read(root.join(&e.path))?;
        if data.len() != e.bytes || hex::encode(Sha256::digest(&data)) != e.sha256 {
            return Ok(false);
        }
    }
    Ok(true)
}

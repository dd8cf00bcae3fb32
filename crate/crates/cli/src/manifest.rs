use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use lextree::model::TrainConfig;
use lextree::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Content hash in git's object style: sha256 over `"blob <len>\0"` and
/// the bytes, so it matches `git hash-object` in a sha256 repository.
pub fn blob_sha256(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub role: String,
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

impl FileEntry {
    pub fn of(role: &str, path: &Path) -> Result<Self> {
        let data = fs::read(path)?;
        Ok(FileEntry {
            role: role.to_string(),
            path: path.to_path_buf(),
            bytes: data.len() as u64,
            sha256: blob_sha256(&data),
        })
    }
}

#[derive(Debug, Serialize)]
pub struct Selection {
    pub seed: u64,
    pub epoch: usize,
    pub dev_root_acc: f64,
    pub dev_node_acc: f64,
    pub test_root_acc: Option<f64>,
    pub test_node_acc: Option<f64>,
}

/// Everything needed to reproduce a training run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub created_unix: u64,
    pub argv: Vec<String>,
    pub task: String,
    pub config: TrainConfig,
    pub vocab_size: usize,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    pub selection: Selection,
}

impl RunManifest {
    pub fn new(task: String, config: TrainConfig, vocab_size: usize, selection: Selection) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            argv: std::env::args().collect(),
            task,
            config,
            vocab_size,
            inputs: Vec::new(),
            outputs: Vec::new(),
            selection,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_of_empty_and_hello() {
        // git hash-object --object-format=sha256
        assert_eq!(
            blob_sha256(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
        assert_eq!(
            blob_sha256(b"hello\n"),
            "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
        );
        assert_ne!(blob_sha256(b"a"), blob_sha256(b"b"));
    }
}

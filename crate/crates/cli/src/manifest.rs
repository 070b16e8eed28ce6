//! Output directory bookkeeping: every emitted file is recorded with its size
//! and SHA-256, and the manifest is written last.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects files and timings from concurrent runs. Writes go straight to
/// disk, one file per call, so runs never share an output file.
pub struct OutputDir {
    root: PathBuf,
    files: Mutex<Vec<FileEntry>>,
    stages: Mutex<Vec<StageTime>>,
}

impl OutputDir {
    pub fn create(root: &Path) -> io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Mutex::new(Vec::new()),
            stages: Mutex::new(Vec::new()),
        })
    }

    pub fn write(&self, name: &str, contents: &str) -> io::Result<()> {
        fs::write(self.root.join(name), contents)?;
        self.files.lock().unwrap().push(FileEntry {
            name: name.to_string(),
            bytes: contents.len() as u64,
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    pub fn timed<T>(&self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages.lock().unwrap().push(StageTime {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    /// Sorted by name so the file list does not depend on thread scheduling.
    pub fn finish(&self, command: &str, config_text: &str) -> io::Result<()> {
        let mut files = self.files.lock().unwrap().clone();
        files.sort_by(|a, b| a.name.cmp(&b.name));
        let mut stages = self.stages.lock().unwrap().clone();
        stages.sort_by(|a, b| a.stage.cmp(&b.stage));
        let manifest = json!({
            "tool": "specobs",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config_sha256": sha256_hex(config_text.as_bytes()),
            "files": files,
            "stages": stages,
        });
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(self.root.join("manifest.json"), text)
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

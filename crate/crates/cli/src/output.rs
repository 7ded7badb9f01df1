//! Artifact writers and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A built-in check: `value` compared against `limit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// `"<"` or `">"`.
    pub relation: String,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    pub fn below(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: "<".into(),
            limit,
            pass: value < limit,
        }
    }

    pub fn above(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: ">".into(),
            limit,
            pass: value > limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Collects output files in one directory, hashing each as it is written.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

/// Shortest round-trip scientific notation; stable across platforms.
pub fn fmt(v: f64) -> String {
    format!("{v:e}")
}

impl Artifacts {
    pub fn new(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(FileEntry {
            name: name.into(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    pub fn csv<R: AsRef<[f64]>>(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = R>) -> anyhow::Result<()> {
        let mut text = header.join(",");
        text.push('\n');
        for row in rows {
            let cells: Vec<String> = row.as_ref().iter().map(|v| fmt(*v)).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        self.write(name, text.as_bytes())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

/// Everything needed to reproduce and audit a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub kind: String,
    pub config: serde_json::Value,
    pub master_seed: u64,
    pub threads: usize,
    pub started_unix_s: u64,
    pub wall_time_s: f64,
    pub files: Vec<FileEntry>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_is_hashed_and_formatted() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::new(dir.path()).unwrap();
        a.csv("t.csv", &["a", "b"], [[1.0, 0.5], [1e-20, -3.0]]).unwrap();
        let text = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(text, "a,b\n1e0,5e-1\n1e-20,-3e0\n");
        let expect = hex::encode(Sha256::digest(text.as_bytes()));
        assert_eq!(a.files()[0].sha256, expect);
        assert_eq!(a.files()[0].bytes, text.len() as u64);
    }

    #[test]
    fn checks_compare_strictly() {
        assert!(Check::below("x", 0.1, 0.2).pass);
        assert!(!Check::below("x", 0.2, 0.2).pass);
        assert!(Check::above("x", 0.6, 0.5).pass);
        assert!(!Check::below("x", f64::NAN, 1.0).pass);
    }
}

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use asepkpz::io::sha256_hex;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub kind: &'a str,
    pub tool_version: &'a str,
    pub config_hash: &'a str,
    pub config: &'a C,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub threads: usize,
    pub complete: bool,
    pub error: Option<String>,
    pub passed: bool,
    pub checks: &'a [Check],
    pub files: &'a [FileEntry],
}

/// Collects checks and result files for one run directory.
pub struct Run {
    pub dir: PathBuf,
    pub checks: Vec<Check>,
    pub files: Vec<FileEntry>,
}

impl Run {
    pub fn new(dir: PathBuf) -> Self {
        Self { dir, checks: Vec::new(), files: Vec::new() }
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, detail: detail.into() });
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(FileEntry { name: name.to_string(), sha256: sha256_hex(contents.as_bytes()), bytes: contents.len() });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write(name, &text)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Write to a temporary name, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

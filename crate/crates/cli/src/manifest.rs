//! Run manifests: what a command did, with which settings, and what it wrote.

use std::path::{Path, PathBuf};
use std::process::Command;

use anyhow::{Context, Result};
use serde::Serialize;
use vila_core::checksum::file_sha256;

use crate::config::{RunConfig, Seeds};

pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Serialize)]
pub struct Output {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub version: String,
    pub git_describe: String,
    pub jobs: usize,
    pub seeds: Seeds,
    pub config: RunConfig,
    pub outputs: Vec<Output>,
}

pub fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

/// Collects written files and finally records them in `run.json`.
pub struct Recorder {
    out: PathBuf,
    written: Vec<PathBuf>,
}

impl Recorder {
    pub fn new(out: &Path) -> Result<Self> {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Self {
            out: out.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    pub fn write(&mut self, path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.record(path);
        Ok(())
    }

    /// Writes `name` under the output directory.
    pub fn write_out(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.out.join(name);
        self.write(&path, bytes)?;
        Ok(path)
    }

    pub fn record(&mut self, path: &Path) {
        self.written.push(path.to_path_buf());
    }

    pub fn finish(self, command: &str, jobs: usize, config: &RunConfig) -> Result<PathBuf> {
        let outputs = self
            .written
            .iter()
            .map(|p| {
                Ok(Output {
                    path: p.to_string_lossy().into_owned(),
                    sha256: file_sha256(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            command: command.into(),
            args: std::env::args().skip(1).collect(),
            version: env!("CARGO_PKG_VERSION").into(),
            git_describe: git_describe(),
            jobs,
            seeds: config.seeds(),
            config: config.clone(),
            outputs,
        };
        let path = self.out.join(RUN_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

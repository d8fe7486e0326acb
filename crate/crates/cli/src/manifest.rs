use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use gglink_core::rng::RNG_ALGORITHM;

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Provenance for one command: what ran, on which bytes, with which settings.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub args: Vec<String>,
    pub rng_algorithm: &'static str,
    pub threads: usize,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_at: String,
    pub finished_at: String,
    pub wall_time_secs: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn digests(paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.clone(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

/// Files of a directory in name order, skipping `skip`.
pub fn dir_files(dir: &Path, skip: &[&str]) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_none_or(|n| !skip.contains(&n))
        })
        .collect();
    files.sort();
    Ok(files)
}

pub struct ManifestBuilder {
    command: String,
    started: DateTime<Utc>,
    inputs: Vec<FileDigest>,
}

impl ManifestBuilder {
    pub fn start(command: &str, inputs: &[PathBuf]) -> Result<Self> {
        Ok(ManifestBuilder {
            command: command.to_string(),
            started: Utc::now(),
            inputs: digests(inputs)?,
        })
    }

    pub fn finish(self, config: impl Serialize, outputs: &[PathBuf], path: &Path) -> Result<()> {
        let finished = Utc::now();
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            args: std::env::args().collect(),
            rng_algorithm: RNG_ALGORITHM,
            threads: rayon::current_num_threads(),
            config: serde_json::to_value(config)?,
            inputs: self.inputs,
            outputs: digests(outputs)?,
            started_at: self.started.to_rfc3339_opts(SecondsFormat::Millis, true),
            finished_at: finished.to_rfc3339_opts(SecondsFormat::Millis, true),
            wall_time_secs: (finished - self.started).num_milliseconds() as f64 / 1000.0,
        };
        let json = serde_json::to_string_pretty(&manifest)? + "\n";
        fs::write(path, json).with_context(|| format!("writing {}", path.display()))
    }
}

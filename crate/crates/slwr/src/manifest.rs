//! Run manifests written next to command outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_paths: Vec<String>,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<Artifact>,
    pub wall_clock_seconds: f64,
    pub version: String,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io("cannot hash", path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Collects what a command touched while it runs.
pub struct ManifestBuilder {
    command: String,
    args: Vec<String>,
    config_paths: Vec<String>,
    seeds: Vec<u64>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, args: &[String]) -> Self {
        ManifestBuilder {
            command: command.into(),
            args: args.to_vec(),
            config_paths: Vec::new(),
            seeds: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn config(&mut self, path: &Path) -> &mut Self {
        self.config_paths.push(path.display().to_string());
        self
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seeds.push(seed);
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    /// Hashes the outputs and writes `<first output>.manifest.json`.
    /// Returns `None` for commands without outputs.
    pub fn finish(&self) -> Result<Option<(PathBuf, RunManifest)>, CliError> {
        let Some(first) = self.outputs.first() else {
            return Ok(None);
        };
        let artifacts = self
            .outputs
            .iter()
            .map(|p| {
                Ok(Artifact {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let manifest = RunManifest {
            command: self.command.clone(),
            args: self.args.clone(),
            config_paths: self.config_paths.clone(),
            seeds: self.seeds.clone(),
            artifacts,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            version: env!("CARGO_PKG_VERSION").into(),
        };
        let mut name = first.as_os_str().to_owned();
        name.push(".manifest.json");
        let path = PathBuf::from(name);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        std::fs::write(&path, text).map_err(|e| CliError::io("cannot write manifest", &path, e))?;
        Ok(Some((path, manifest)))
    }
}

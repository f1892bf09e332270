//! Run manifests: the resolved invocation, config snapshot and artifact hashes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::Command;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

impl Artifact {
    pub fn hash(path: &Path) -> CliResult<Self> {
        let bytes = fs::read(path).map_err(CliError::io(path))?;
        Ok(Artifact {
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// Invocation with absolute paths and every default filled in.
    pub invocation: Command,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, Artifact>,
    /// Keyed by role; a file name for directory outputs.
    pub outputs: BTreeMap<String, Artifact>,
}

impl RunManifest {
    pub fn new(invocation: Command, seed: u64, config: serde_json::Value) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            invocation,
            seed,
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, role: &str, path: &Path) -> CliResult<()> {
        self.inputs.insert(role.to_string(), Artifact::hash(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, role: &str, path: &Path) -> CliResult<()> {
        self.outputs.insert(role.to_string(), Artifact::hash(path)?);
        Ok(())
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, json + "\n").map_err(CliError::io(path))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(CliError::io(path))?;
        serde_json::from_str(&text).map_err(CliError::input(path))
    }
}

/// `name.ext` becomes `name.ext<suffix>`, used for files written next to a file output.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

pub fn absolute(path: &Path) -> CliResult<PathBuf> {
    std::path::absolute(path).map_err(CliError::io(path))
}

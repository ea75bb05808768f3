//! Run directories and their manifests.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use csd_core::ParameterSet;

use crate::commands::Command;

/// Environment variable naming the directory that holds run directories.
pub const OUTPUT_ROOT_ENV: &str = "CSD_OUTPUT_ROOT";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Fully resolved settings; replaying them reproduces the run.
    pub command: Command,
    /// Effective model parameters in the key-value file format.
    pub parameters: String,
    /// SHA-256 of `parameters`.
    pub parameter_hash: String,
    /// Files written next to the manifest.
    pub outputs: Vec<String>,
    pub wall_clock_s: f64,
    pub results: Value,
    pub version: String,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn params(&self) -> Result<ParameterSet> {
        ParameterSet::parse(&self.parameters).context("model_core::parse parameters in manifest")
    }
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Runs a resolved command and writes its outputs and manifest into `dir`.
pub fn execute(cmd: &Command, p: &ParameterSet, dir: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    let outcome = cmd.execute(p).with_context(|| format!("{} failed", cmd.name()))?;
    let wall_clock_s = start.elapsed().as_secs_f64();
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, contents) in &outcome.files {
        let path = dir.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    }
    let parameters = p.to_text();
    let manifest = RunManifest {
        subcommand: cmd.name().to_string(),
        command: cmd.clone(),
        parameter_hash: sha256_hex(&parameters),
        parameters,
        outputs: outcome.files.iter().map(|(n, _)| n.clone()).collect(),
        wall_clock_s,
        results: outcome.results,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let path = dir.join(MANIFEST);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(manifest)
}

/// `<root>/<name>`, where the root comes from the flag, then the
/// environment, then `runs`.
pub fn run_dir(root: Option<&Path>, name: &str) -> PathBuf {
    let root = root
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    root.join(name)
}

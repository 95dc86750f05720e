//! Run manifests: every command that writes a primary output also writes
//! `<output>.manifest.json` carrying the config snapshot, seed, tool
//! version, and input hashes — enough to re-run the step. Only the
//! `created_unix` field varies between identical runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context as _;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub created_unix: u64,
}

pub fn file_sha256(path: &Path) -> anyhow::Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("cannot hash input {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Assemble a manifest for one command run.
pub fn build_manifest(
    command: &str,
    seed: u64,
    config: &RunConfig,
    inputs: &[&Path],
    outputs: &[&Path],
) -> anyhow::Result<RunManifest> {
    let mut input_hashes = BTreeMap::new();
    for path in inputs {
        input_hashes.insert(path.display().to_string(), file_sha256(path)?);
    }
    Ok(RunManifest {
        command: command.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config: config.clone(),
        inputs: input_hashes,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    })
}

/// Write the manifest next to the primary output.
pub fn write_manifest(primary_output: &Path, manifest: &RunManifest) -> anyhow::Result<PathBuf> {
    let mut name = primary_output
        .file_name()
        .unwrap_or_default()
        .to_os_string();
    name.push(".manifest.json");
    let path = primary_output.with_file_name(name);
    let body = serde_json::to_string_pretty(manifest)?;
    std::fs::write(&path, body + "\n")
        .with_context(|| format!("cannot write manifest {}", path.display()))?;
    Ok(path)
}

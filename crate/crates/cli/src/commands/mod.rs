pub mod corpus;
pub mod dataset;
pub mod eval;
pub mod forge;
pub mod lit;
pub mod rag;

use std::path::{Path, PathBuf};

use anyhow::Context as _;

/// Flag value if present, else the config-supplied path, else an error
/// naming the flag.
pub fn resolve_input(
    flag: &Option<PathBuf>,
    config_path: &Option<PathBuf>,
    what: &str,
) -> anyhow::Result<PathBuf> {
    flag.clone().or_else(|| config_path.clone()).ok_or_else(|| {
        anyhow::anyhow!("no {what} given: pass --{what} or set it in the config [paths] section")
    })
}

pub fn read_to_string(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn write_string(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("cannot create {}", parent.display()))?;
        }
    }
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_json_pretty<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let body = serde_json::to_string_pretty(value)?;
    write_string(path, &(body + "\n"))
}

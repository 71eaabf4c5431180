//! Output helpers: reproducibility headers and atomic file writes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Comment header carried by every text output: tool version, command,
/// resolved configuration and master seed.
pub fn header<C: Serialize>(command: &str, config: &C, seed: u64) -> String {
    let config = serde_json::to_string(config).expect("configs serialise to JSON");
    format!("# ade {TOOL_VERSION} {command}\n# config: {config}\n# seed: {seed}\n")
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp: PathBuf = path.with_file_name(tmp_name);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

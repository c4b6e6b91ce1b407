use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp: PathBuf = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Per-command entry of a run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub command: String,
    /// "pass", "fail", "config-error" or "numeric-failure".
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
    pub integration_steps: u64,
}

/// Everything needed to reproduce a run: feeding the manifest back through
/// `--config` replays the same effective configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    /// SHA-256 of the compact JSON serialization of `config`.
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub threads: usize,
    pub commands: Vec<CommandRecord>,
    pub exit_code: i32,
    pub wall_clock_seconds: f64,
    pub integration_steps: u64,
}

impl RunManifest {
    pub fn config_hash(config: &serde_json::Value) -> String {
        sha256_hex(
            serde_json::to_string(config)
                .expect("config serializes")
                .as_bytes(),
        )
    }
}

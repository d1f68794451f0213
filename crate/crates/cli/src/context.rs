//! Shared command plumbing: the artifact root, the write lock, and the
//! line-JSON event stream.

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;

/// Artifact root: `DENSETACT_HOME` or `./densetact-home`.
pub fn home_dir() -> PathBuf {
    std::env::var_os("DENSETACT_HOME")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("densetact-home"))
}

/// One line-delimited JSON event on stderr.
pub fn emit(event: &str, fields: Value) {
    let mut obj = json!({ "event": event });
    if let (Some(dst), Some(src)) = (obj.as_object_mut(), fields.as_object()) {
        for (k, v) in src {
            dst.insert(k.clone(), v.clone());
        }
    }
    eprintln!("{obj}");
}

/// Logs the fully resolved configuration with its content hash.
pub fn emit_config(config: &RunConfig) {
    emit(
        "config",
        json!({
            "hash": config.content_hash(),
            "resolved": serde_json::to_value(config).expect("config serializes"),
        }),
    );
}

/// Exclusive advisory lock over the artifact directory; the file exists
/// for exactly as long as some command is writing.
#[derive(Debug)]
pub struct WriteLock {
    path: PathBuf,
}

impl WriteLock {
    pub fn acquire(home: &Path) -> Result<WriteLock, CliError> {
        std::fs::create_dir_all(home).map_err(|e| {
            CliError::runtime(
                "cli",
                "lock",
                format!("cannot create {}: {e}", home.display()),
            )
        })?;
        let path = home.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(WriteLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::runtime(
                "cli",
                "lock",
                format!(
                    "{} exists: another command is writing to this artifact \
                     directory (delete the file if that command crashed)",
                    path.display()
                ),
            )),
            Err(e) => Err(CliError::runtime(
                "cli",
                "lock",
                format!("cannot create {}: {e}", path.display()),
            )),
        }
    }
}

impl Drop for WriteLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

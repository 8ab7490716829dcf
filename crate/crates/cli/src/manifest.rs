//! Run manifest, content hashing, stage cache checks and the directory lock.

use crate::error::{io_err, CliError, CliResult};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const TOOL_VERSION: &str = concat!("tokenwalk ", env!("CARGO_PKG_VERSION"));
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = ".lock";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Hash of everything the stage's outputs depend on.
    pub key: String,
    /// Output path (relative to the run directory) to sha256.
    pub artifacts: BTreeMap<String, String>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub stages: BTreeMap<String, StageRecord>,
}

/// Outcome of checking a stage against the manifest.
#[derive(Clone, Debug, PartialEq)]
pub enum CacheState {
    Hit,
    Miss,
    /// Recorded with the same key, but these artifacts are gone or changed.
    Tampered(Vec<String>),
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(sha256_bytes(&bytes))
}

/// Hash of labelled parts; labels keep `("a", "bc")` and `("ab", "c")` apart.
pub fn stage_key(parts: &[(&str, &str)]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(TOOL_VERSION.as_bytes());
    for (label, value) in parts {
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
        hasher.update((value.len() as u64).to_le_bytes());
        hasher.update(value.as_bytes());
    }
    hex::encode(hasher.finalize())
}

impl RunManifest {
    /// Reads the manifest in `dir`; a missing or unreadable one starts fresh.
    pub fn load(dir: &Path, config_hash: &str) -> Self {
        let path = dir.join(MANIFEST_FILE);
        let loaded =
            std::fs::read_to_string(&path).ok().and_then(|text| {
                match serde_json::from_str::<RunManifest>(&text) {
                    Ok(m) => Some(m),
                    Err(e) => {
                        log::warn!(
                            "{}: unreadable manifest ({e}); starting a new one",
                            path.display()
                        );
                        None
                    }
                }
            });
        let mut m = loaded.unwrap_or_default();
        m.tool_version = TOOL_VERSION.to_string();
        m.config_hash = config_hash.to_string();
        m
    }

    pub fn save(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))
    }

    pub fn check(&self, stage: &str, key: &str, dir: &Path) -> CacheState {
        let Some(rec) = self.stages.get(stage) else {
            return CacheState::Miss;
        };
        if rec.key != key {
            return CacheState::Miss;
        }
        let bad: Vec<String> = rec
            .artifacts
            .iter()
            .filter(|(rel, hash)| {
                sha256_file(&dir.join(rel)).ok().as_deref() != Some(hash.as_str())
            })
            .map(|(rel, _)| rel.clone())
            .collect();
        if bad.is_empty() {
            CacheState::Hit
        } else {
            CacheState::Tampered(bad)
        }
    }

    /// Hashes `artifacts` (relative to `dir`) and records them under `stage`.
    pub fn record(
        &mut self,
        stage: &str,
        key: &str,
        dir: &Path,
        artifacts: &[PathBuf],
        seconds: f64,
    ) -> CliResult<()> {
        let mut hashes = BTreeMap::new();
        for rel in artifacts {
            hashes.insert(rel_string(rel), sha256_file(&dir.join(rel))?);
        }
        self.stages.insert(
            stage.to_string(),
            StageRecord {
                key: key.to_string(),
                artifacts: hashes,
                seconds,
            },
        );
        Ok(())
    }

    /// The recorded hash of one artifact, verified against the file on disk.
    pub fn verified_hash(
        &self,
        stage: &str,
        rel: &str,
        dir: &Path,
        command: &'static str,
    ) -> CliResult<String> {
        let missing = || CliError::Missing {
            what: format!("{rel} (stage `{stage}`)"),
            command,
        };
        let rec = self.stages.get(stage).ok_or_else(missing)?;
        let want = rec.artifacts.get(rel).ok_or_else(missing)?;
        let path = dir.join(rel);
        if !path.exists() {
            return Err(missing());
        }
        let got = sha256_file(&path)?;
        if &got != want {
            return Err(CliError::Missing {
                what: format!("{rel} was modified after `{stage}` wrote it, so it"),
                command,
            });
        }
        Ok(got)
    }
}

/// Forward-slash relative path, stable across platforms.
pub fn rel_string(rel: &Path) -> String {
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Exclusive claim on a run directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CliError::Locked(format!(
                    "{} is locked by another run ({}); remove it if that run is no longer alive",
                    dir.display(),
                    path.display()
                )))
            }
            Err(e) => Err(io_err(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

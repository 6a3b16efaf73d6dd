//! `manifest.json`: what each stage wrote, with SHA-256 checksums.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const FILE_NAME: &str = "manifest.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub stages: Vec<StageRecord>,
    pub files: Vec<FileRecord>,
    pub gates: Vec<Gate>,
    /// Stage settings worth keeping with the outputs, keyed `stage.name`.
    #[serde(default)]
    pub settings: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub config_hash: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub stage: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub stage: String,
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Gate {
    /// Passes when value ≤ threshold.
    pub fn at_most(stage: &str, name: &str, value: f64, threshold: f64) -> Self {
        Self { stage: stage.into(), name: name.into(), value, threshold, passed: value <= threshold }
    }

    /// Passes when value ≥ threshold.
    pub fn at_least(stage: &str, name: &str, value: f64, threshold: f64) -> Self {
        Self { stage: stage.into(), name: name.into(), value, threshold, passed: value >= threshold }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display(), e))?;
    Ok(sha256_hex(&bytes))
}

impl RunManifest {
    /// The manifest in `dir`, or an empty one.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(FILE_NAME);
        if !path.exists() {
            return Ok(Self { code_version: env!("CARGO_PKG_VERSION").into(), ..Default::default() });
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(path.display(), e))?;
        serde_json::from_str(&text).map_err(|e| Error::Checksum(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(FILE_NAME);
        let text = serde_json::to_string_pretty(self).expect("manifest serialises");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(path.display(), e))
    }

    /// Replaces everything an earlier run of `stage` recorded.
    pub fn begin_stage(&mut self, stage: &str) {
        self.stages.retain(|s| s.name != stage);
        self.files.retain(|f| f.stage != stage);
        self.gates.retain(|g| g.stage != stage);
        let prefix = format!("{stage}.");
        self.settings.retain(|k, _| !k.starts_with(&prefix));
    }

    pub fn finish_stage(&mut self, stage: &str, config_hash: &str, seconds: f64) {
        self.config_hash = config_hash.into();
        self.code_version = env!("CARGO_PKG_VERSION").into();
        self.stages.push(StageRecord { name: stage.into(), config_hash: config_hash.into(), seconds });
    }

    pub fn record_file(&mut self, dir: &Path, rel: &str, stage: &str) -> Result<()> {
        let sha256 = file_sha256(&dir.join(rel))?;
        self.files.retain(|f| f.path != rel);
        self.files.push(FileRecord { path: rel.into(), sha256, stage: stage.into() });
        Ok(())
    }

    pub fn record_setting(&mut self, stage: &str, key: &str, value: impl ToString) {
        self.settings.insert(format!("{stage}.{key}"), value.to_string());
    }

    pub fn record_gates(&mut self, gates: &[Gate]) {
        self.gates.extend(gates.iter().cloned());
    }

    /// Problems with the recorded files: missing, changed, or present in
    /// `dir` without a record.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>> {
        let mut problems = Vec::new();
        for f in &self.files {
            let path = dir.join(&f.path);
            if !path.exists() {
                problems.push(format!("{}: missing", f.path));
            } else if file_sha256(&path)? != f.sha256 {
                problems.push(format!("{}: checksum mismatch", f.path));
            }
        }
        for rel in list_files(dir)? {
            if rel != FILE_NAME && !self.files.iter().any(|f| f.path == rel) {
                problems.push(format!("{rel}: not in the manifest"));
            }
        }
        Ok(problems)
    }
}

/// Regular files under `dir`, relative and sorted.
pub fn list_files(dir: &Path) -> Result<Vec<String>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir.display(), e))?;
        for entry in entries {
            let path: PathBuf = entry.map_err(|e| Error::io(dir.display(), e))?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                out.push(path.strip_prefix(root).unwrap_or(&path).to_string_lossy().replace('\\', "/"));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    if dir.exists() {
        walk(dir, dir, &mut out)?;
    }
    out.sort();
    Ok(out)
}

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::Stage;
use crate::error::{Error, Result};

pub const STAGE_FILE: &str = "stage.json";

/// Written last by every stage; a stage is reusable when its key matches and
/// its outputs still hash to `outputs`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub key: String,
    pub outputs: String,
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            files_under(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// SHA-256 over every file below `dir` except the stage record, in sorted
/// relative-path order, covering both names and contents.
pub fn dir_digest(dir: &Path) -> Result<String> {
    let mut files = Vec::new();
    files_under(dir, &mut files)?;
    let mut rel: Vec<(String, PathBuf)> = files
        .into_iter()
        .map(|p| {
            let r = p
                .strip_prefix(dir)
                .unwrap_or(&p)
                .to_string_lossy()
                .replace('\\', "/");
            (r, p)
        })
        .filter(|(r, _)| r != STAGE_FILE)
        .collect();
    rel.sort();
    let mut h = Sha256::new();
    for (r, p) in rel {
        let bytes = fs::read(&p)?;
        h.update((r.len() as u64).to_le_bytes());
        h.update(r.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn key_digest(value: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}

pub fn read_record(dir: &Path) -> Result<Option<StageRecord>> {
    let path = dir.join(STAGE_FILE);
    match fs::read_to_string(&path) {
        Ok(text) => Ok(Some(
            serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?,
        )),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn write_record(dir: &Path, record: &StageRecord) -> Result<()> {
    fs::write(
        dir.join(STAGE_FILE),
        serde_json::to_string_pretty(record)? + "\n",
    )?;
    Ok(())
}

/// True when `dir` holds a complete, unmodified run for `key`.
pub fn is_fresh(dir: &Path, key: &str) -> Result<bool> {
    match read_record(dir)? {
        Some(r) if r.key == key => Ok(dir_digest(dir)? == r.outputs),
        _ => Ok(false),
    }
}

//! Parameter checkpoints: a flat little-endian `f64` array plus a JSON header.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ParamVector, Segment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub step: u64,
    pub len: usize,
    pub dtype: String,
    pub segments: Vec<Segment>,
}

/// Paths of the two files making up the checkpoint for `step`.
pub fn checkpoint_paths(dir: &Path, step: u64) -> (PathBuf, PathBuf) {
    let stem = format!("step_{step:06}");
    (dir.join(format!("{stem}.bin")), dir.join(format!("{stem}.json")))
}

pub fn encode_values(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_values(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Numeric(format!(
            "checkpoint payload of {} bytes is not a whole number of f64s",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

/// Writes `path` via a temporary sibling and a rename, so a reader never sees
/// a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(e) => format!("{}.partial", e.to_string_lossy()),
        None => "partial".into(),
    });
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn save_checkpoint(dir: &Path, step: u64, params: &ParamVector) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (bin, json) = checkpoint_paths(dir, step);
    let header = CheckpointHeader {
        step,
        len: params.len(),
        dtype: "f64le".into(),
        segments: params.segments().to_vec(),
    };
    write_atomic(&bin, &encode_values(params.values()))?;
    let text = serde_json::to_vec_pretty(&header).expect("header serializes");
    write_atomic(&json, &text)?;
    Ok((bin, json))
}

pub fn load_checkpoint(bin: &Path, json: &Path) -> Result<(CheckpointHeader, ParamVector)> {
    let text = fs::read(json).map_err(|e| Error::io(json, e))?;
    let header: CheckpointHeader = serde_json::from_slice(&text).map_err(|e| Error::Parse {
        path: json.to_path_buf(),
        msg: e.to_string(),
    })?;
    let bytes = fs::read(bin).map_err(|e| Error::io(bin, e))?;
    let values = decode_values(&bytes)?;
    crate::error::check_len("checkpoint payload", header.len, values.len())?;
    let params = ParamVector::from_parts(values, header.segments.clone())?;
    Ok((header, params))
}

//! Checkpoint directories: `manifest.json` plus one little-endian `f32`
//! blob per parameter tensor and per optimizer moment.
//!
//! ```text
//! ckpt/manifest.json
//! ckpt/params/attn.0.head.3.Wq.f32
//! ckpt/adam_m/attn.0.head.3.Wq.f32
//! ckpt/adam_v/attn.0.head.3.Wq.f32
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AdamState, Cursor, OptimizerConfig};
use crate::model::{ModelConfig, Params, Tensor};

pub const CHECKPOINT_FORMAT: &str = "maia2-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: bad manifest: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("{path}: unsupported checkpoint version {found} (expected {CHECKPOINT_VERSION})")]
    Version { path: PathBuf, found: u32 },
    #[error("{path}: missing blob")]
    MissingBlob { path: PathBuf },
    #[error("{path}: expected {expected} bytes, found {found}")]
    Shape { path: PathBuf, expected: usize, found: usize },
}

/// Full training state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: Params,
    pub adam: AdamState,
    pub optimizer: OptimizerConfig,
    pub cursor: Cursor,
    pub step: u64,
    pub seed: u64,
    pub frozen: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    config: ModelConfig,
    optimizer: OptimizerConfig,
    step: u64,
    seed: u64,
    adam_step: u64,
    cursor: Cursor,
    frozen: Vec<String>,
    tensors: Vec<TensorEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_blob(path: &Path, data: &[f32]) -> Result<(), CheckpointError> {
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(io_err(path))
}

fn read_blob(path: &Path, len: usize) -> Result<Vec<f32>, CheckpointError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(CheckpointError::MissingBlob {
                path: path.to_path_buf(),
            })
        }
        Err(e) => return Err(io_err(path)(e)),
    };
    if bytes.len() != len * 4 {
        return Err(CheckpointError::Shape {
            path: path.to_path_buf(),
            expected: len * 4,
            found: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn blob_path(dir: &Path, kind: &str, name: &str) -> PathBuf {
    dir.join(kind).join(format!("{name}.f32"))
}

pub fn save_checkpoint(dir: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    for kind in ["params", "adam_m", "adam_v"] {
        let d = dir.join(kind);
        fs::create_dir_all(&d).map_err(io_err(&d))?;
    }
    let tensors = ckpt.params.tensors();
    for (i, t) in tensors.iter().enumerate() {
        write_blob(&blob_path(dir, "params", &t.name), &t.data)?;
        write_blob(&blob_path(dir, "adam_m", &t.name), &ckpt.adam.m[i])?;
        write_blob(&blob_path(dir, "adam_v", &t.name), &ckpt.adam.v[i])?;
    }
    let manifest = Manifest {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config: ckpt.params.config().clone(),
        optimizer: ckpt.optimizer.clone(),
        step: ckpt.step,
        seed: ckpt.seed,
        adam_step: ckpt.adam.step,
        cursor: ckpt.cursor,
        frozen: ckpt.frozen.clone(),
        tensors: tensors
            .iter()
            .map(|t| TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(io_err(&path))
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint, CheckpointError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CheckpointError::Manifest {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    if value.get("format").and_then(|f| f.as_str()) != Some(CHECKPOINT_FORMAT) {
        return Err(CheckpointError::Manifest {
            path,
            reason: format!("format is not {CHECKPOINT_FORMAT}"),
        });
    }
    let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version { path, found: version });
    }
    let manifest: Manifest = serde_json::from_value(value).map_err(|e| CheckpointError::Manifest {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    manifest
        .config
        .validate()
        .map_err(|reason| CheckpointError::Manifest { path: path.clone(), reason })?;

    let expected = Params::expected_layout(&manifest.config);
    if manifest.tensors.len() != expected.len() {
        return Err(CheckpointError::Manifest {
            path,
            reason: format!("expected {} tensors, found {}", expected.len(), manifest.tensors.len()),
        });
    }
    for (entry, (name, shape)) in manifest.tensors.iter().zip(&expected) {
        if entry.name != *name || entry.shape != *shape {
            return Err(CheckpointError::Manifest {
                path,
                reason: format!("{}: expected {name} with shape {shape:?}, found shape {:?}", entry.name, entry.shape),
            });
        }
    }

    let mut tensors = Vec::with_capacity(expected.len());
    let mut m = Vec::with_capacity(expected.len());
    let mut v = Vec::with_capacity(expected.len());
    for (name, shape) in expected {
        let len = shape.iter().product();
        let data = read_blob(&blob_path(dir, "params", &name), len)?;
        m.push(read_blob(&blob_path(dir, "adam_m", &name), len)?);
        v.push(read_blob(&blob_path(dir, "adam_v", &name), len)?);
        tensors.push(Tensor { name, shape, data });
    }
    let params = Params::from_tensors(&manifest.config, tensors)
        .map_err(|reason| CheckpointError::Manifest { path, reason })?;
    Ok(Checkpoint {
        params,
        adam: AdamState {
            step: manifest.adam_step,
            m,
            v,
        },
        optimizer: manifest.optimizer,
        cursor: manifest.cursor,
        step: manifest.step,
        seed: manifest.seed,
        frozen: manifest.frozen,
    })
}

/// Loads only the parameters, for inference.
pub fn load_params(dir: &Path) -> Result<Params, CheckpointError> {
    load_checkpoint(dir).map(|c| c.params)
}

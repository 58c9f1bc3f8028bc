//! Binary checkpoint format.
//!
//! Layout: the magic bytes `STGADCKP`, a little-endian `u64` header length,
//! a JSON header `{version, config, tensors: [{name, shape, dtype,
//! byte_offset}]}`, then the raw little-endian tensor data in flat order.
//! Offsets are relative to the start of the data section.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{layout, storage_shape, ModelConfig, ModelParameters};
use crate::tensor::Matrix;

const MAGIC: &[u8; 8] = b"STGADCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    fn width(self) -> usize {
        match self {
            Self::F32 => 4,
            Self::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: Precision,
    pub byte_offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

/// Serializes parameters; identical inputs give identical bytes.
pub fn checkpoint_bytes(params: &ModelParameters, precision: Precision) -> Vec<u8> {
    let infos = layout(&params.config);
    let mut offset = 0u64;
    let tensors = infos
        .into_iter()
        .map(|info| {
            let entry = TensorEntry {
                byte_offset: offset,
                dtype: precision,
                name: info.name,
                shape: info.shape,
            };
            offset += (entry.shape.iter().product::<usize>() * precision.width()) as u64;
            entry
        })
        .collect();
    let header = CheckpointHeader {
        version: CHECKPOINT_VERSION,
        config: params.config.clone(),
        tensors,
    };
    let json = serde_json::to_vec(&header).expect("checkpoint header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for m in params.tensors() {
        for &v in m.data() {
            match precision {
                Precision::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                Precision::F64 => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    out
}

pub fn save_checkpoint(params: &ModelParameters, path: impl AsRef<Path>, precision: Precision) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, checkpoint_bytes(params, precision)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParameters> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes)
}

/// Parses checkpoint bytes, validating the header against the layout implied
/// by its configuration.
pub fn parse_checkpoint(bytes: &[u8]) -> Result<ModelParameters> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file (bad magic or truncated preamble)"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("eight bytes")) as usize;
    let data_start = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[16..data_start])
        .map_err(|e| Error::Checkpoint(format!("malformed header: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            header.version
        )));
    }
    header.config.validate()?;
    let expected = layout(&header.config);
    if expected.len() != header.tensors.len() {
        return Err(bad("tensor count does not match the configuration"));
    }
    let data = &bytes[data_start..];
    let mut offset = 0usize;
    let mut tensors = Vec::with_capacity(expected.len());
    for (info, entry) in expected.iter().zip(&header.tensors) {
        if info.name != entry.name || info.shape != entry.shape {
            return Err(Error::Checkpoint(format!(
                "tensor {} {:?} does not match expected {} {:?}",
                entry.name, entry.shape, info.name, info.shape
            )));
        }
        if entry.byte_offset as usize != offset {
            return Err(Error::Checkpoint(format!("tensor {} has an inconsistent offset", entry.name)));
        }
        let (rows, cols) = storage_shape(&entry.shape);
        let width = entry.dtype.width();
        let end = offset + rows * cols * width;
        let raw = data
            .get(offset..end)
            .ok_or_else(|| Error::Checkpoint(format!("truncated data in tensor {}", entry.name)))?;
        let values = raw
            .chunks_exact(width)
            .map(|c| match entry.dtype {
                Precision::F32 => f32::from_le_bytes(c.try_into().expect("four bytes")) as f64,
                Precision::F64 => f64::from_le_bytes(c.try_into().expect("eight bytes")),
            })
            .collect();
        tensors.push(Matrix::from_vec(rows, cols, values));
        offset = end;
    }
    if offset != data.len() {
        return Err(bad("trailing bytes after tensor data"));
    }
    let params = ModelParameters::from_tensors(header.config, tensors);
    if !params.is_finite() {
        return Err(Error::Numeric("checkpoint contains non-finite values".into()));
    }
    Ok(params)
}

/// Reads only the header of a checkpoint.
pub fn read_header(path: impl AsRef<Path>) -> Result<CheckpointHeader> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("eight bytes")) as usize;
    let json = bytes
        .get(16..16 + len)
        .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    serde_json::from_slice(json).map_err(|e| Error::Checkpoint(format!("malformed header: {e}")))
}

//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! | bytes        | content                                         |
//! |--------------|-------------------------------------------------|
//! | 4            | magic `OCSN`                                    |
//! | 4            | `u32` format version (= 1)                      |
//! | 8            | `u64` header length `H`                         |
//! | H            | UTF-8 JSON header: config, metadata, tensor list|
//! | 4 × Σ sizes  | `f32` parameter data in header order            |

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::network::{hex_digest, Model, ModelConfig, NetworkError};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"OCSN";
pub const FORMAT_VERSION: u32 = 1;
const PREAMBLE_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint: bad magic bytes {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {found} (this build reads version {FORMAT_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("checkpoint truncated: {section} needs {expected} bytes, {available} available")]
    Truncated {
        section: &'static str,
        expected: u64,
        available: u64,
    },
    #[error("checkpoint header is not valid JSON: {0}")]
    Header(String),
    #[error("checkpoint is inconsistent: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, CheckpointError>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub epochs_completed: usize,
    pub dataset_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    metadata: TrainingMetadata,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug)]
pub struct LoadedCheckpoint {
    pub model: Model,
    pub metadata: TrainingMetadata,
    /// SHA-256 of the checkpoint bytes, hex encoded.
    pub digest: String,
}

pub fn bytes_digest(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex_digest(h)
}

pub fn encode_checkpoint(model: &Model, metadata: &TrainingMetadata) -> Vec<u8> {
    let tensors = model
        .config()
        .parameter_shapes()
        .into_iter()
        .map(|(name, shape)| TensorEntry { name, shape })
        .collect();
    let header = Header {
        config: model.config().clone(),
        metadata: metadata.clone(),
        tensors,
    };
    let header = serde_json::to_vec(&header).expect("header serializes");

    let mut out = Vec::with_capacity(PREAMBLE_LEN + header.len() + 4 * model.parameter_count());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for t in model.parameters() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Model, TrainingMetadata)> {
    let truncated = |section, expected: usize, available: usize| CheckpointError::Truncated {
        section,
        expected: expected as u64,
        available: available as u64,
    };
    if bytes.len() < MAGIC.len() {
        return Err(truncated("magic", MAGIC.len(), bytes.len()));
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    if bytes.len() < PREAMBLE_LEN {
        return Err(truncated("preamble", PREAMBLE_LEN, bytes.len()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion { found: version });
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let rest = &bytes[PREAMBLE_LEN..];
    if header_len > rest.len() as u64 {
        return Err(CheckpointError::Truncated {
            section: "header",
            expected: header_len,
            available: rest.len() as u64,
        });
    }
    let (header_bytes, payload) = rest.split_at(header_len as usize);
    let header: Header = serde_json::from_slice(header_bytes).map_err(|e| CheckpointError::Header(e.to_string()))?;

    let expected_shapes = header.config.parameter_shapes();
    let listed: Vec<(String, Vec<usize>)> = header
        .tensors
        .iter()
        .map(|t| (t.name.clone(), t.shape.clone()))
        .collect();
    if listed != expected_shapes {
        return Err(CheckpointError::Inconsistent(
            "tensor list does not match the model config".into(),
        ));
    }
    let total: usize = listed.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    let need = total * 4;
    if payload.len() < need {
        return Err(truncated("parameter data", need, payload.len()));
    }
    if payload.len() > need {
        return Err(CheckpointError::Inconsistent(format!(
            "{} trailing bytes after parameter data",
            payload.len() - need
        )));
    }

    let mut floats = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    let mut tensors = Vec::with_capacity(listed.len());
    for (name, shape) in &listed {
        let n = shape.iter().product();
        let data: Vec<f32> = floats.by_ref().take(n).collect();
        let t = Tensor::from_vec(shape, data).map_err(|e| CheckpointError::Inconsistent(format!("{name}: {e}")))?;
        tensors.push(t);
    }
    let model = Model::from_parameters(header.config, tensors).map_err(|e| match e {
        NetworkError::Config(m) => CheckpointError::Inconsistent(format!("config: {m}")),
        other => CheckpointError::Inconsistent(other.to_string()),
    })?;
    Ok((model, header.metadata))
}

/// Writes the checkpoint and returns its digest.
pub fn save_checkpoint(model: &Model, metadata: &TrainingMetadata, path: &Path) -> Result<String> {
    let bytes = encode_checkpoint(model, metadata);
    fs::write(path, &bytes).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(bytes_digest(&bytes))
}

pub fn load_checkpoint(path: &Path) -> Result<LoadedCheckpoint> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let (model, metadata) = decode_checkpoint(&bytes)?;
    Ok(LoadedCheckpoint {
        model,
        metadata,
        digest: bytes_digest(&bytes),
    })
}

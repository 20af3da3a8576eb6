//! Model checkpoint files.
//!
//! Layout: one line of JSON header terminated by `\n`, then the raw
//! parameter blob: every tensor in declaration order, little-endian f64.
//! The header's `checksum` is the SHA-256 of the blob.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::deformer::{KeypointDeformer, ModelConfig};
use crate::net::Parameters;
use crate::{Error, Result, Rng};

pub const FORMAT: &str = "keydeform-checkpoint";
pub const VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub category: String,
    pub num_keypoints: usize,
    pub cage_vertices: usize,
    /// Cage template identifier, e.g. `icosphere:1`.
    pub cage_template: String,
    pub model: ModelConfig,
    /// Free-form training hyperparameters (JSON object).
    pub hyperparameters: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
    pub blob_bytes: usize,
    pub checksum: String,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: KeypointDeformer,
}

impl Checkpoint {
    pub fn new(model: KeypointDeformer, category: &str, hyperparameters: serde_json::Value) -> Self {
        let blob = blob(&model);
        let header = CheckpointHeader {
            format: FORMAT.into(),
            version: VERSION,
            category: category.into(),
            num_keypoints: model.num_keypoints(),
            cage_vertices: model.cage_vertices(),
            cage_template: format!("icosphere:{}", model.config.cage_subdivisions),
            model: model.config.clone(),
            hyperparameters,
            tensors: model
                .tensors()
                .iter()
                .map(|t| TensorEntry {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                })
                .collect(),
            blob_bytes: blob.len(),
            checksum: sha256_hex(&blob),
        };
        Self { header, model }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(&self.header).expect("header serializes");
        out.push(b'\n');
        out.extend(blob(&self.model));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let split = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Checkpoint("missing header line".into()))?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[..split])?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format {} v{}",
                header.format, header.version
            )));
        }
        let data = &bytes[split + 1..];
        if data.len() != header.blob_bytes {
            return Err(Error::Checkpoint(format!(
                "blob is {} bytes, header says {}",
                data.len(),
                header.blob_bytes
            )));
        }
        if sha256_hex(data) != header.checksum {
            return Err(Error::Checkpoint("checksum mismatch".into()));
        }
        let mut model = KeypointDeformer::new(header.model.clone(), &mut Rng::new(0))?;
        let mut offset = 0;
        {
            let tensors = model.tensors_mut();
            if tensors.len() != header.tensors.len() {
                return Err(Error::Checkpoint("tensor count does not match the architecture".into()));
            }
            for (t, entry) in tensors.into_iter().zip(&header.tensors) {
                if t.name != entry.name || t.shape != entry.shape {
                    return Err(Error::Checkpoint(format!(
                        "tensor `{}` {:?} does not match architecture `{}` {:?}",
                        entry.name, entry.shape, t.name, t.shape
                    )));
                }
                for v in &mut t.values {
                    let end = offset + 8;
                    if end > data.len() {
                        return Err(Error::Checkpoint("blob shorter than declared tensors".into()));
                    }
                    *v = f64::from_le_bytes(data[offset..end].try_into().expect("8 bytes"));
                    offset = end;
                }
            }
        }
        if offset != data.len() {
            return Err(Error::Checkpoint("blob longer than declared tensors".into()));
        }
        Ok(Self { header, model })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

fn blob(model: &KeypointDeformer) -> Vec<u8> {
    let mut out = Vec::with_capacity(model.parameter_count() * 8);
    for t in model.tensors() {
        for v in &t.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

//! Parameter checkpoints: a flat little-endian `f64` array plus a JSON
//! manifest recording every tensor's group, shape and offset.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numcore::{ParamGroup, Tensor};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub group: String,
    pub group_index: usize,
    pub slot: usize,
    pub shape: Vec<usize>,
    /// Offset into the flat array, in elements.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub total_len: usize,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

/// Flatten groups into bytes and a manifest.
pub fn encode(groups: &[ParamGroup]) -> (Vec<u8>, CheckpointManifest) {
    let mut bytes = Vec::new();
    let mut tensors = Vec::new();
    let mut offset = 0;
    for group in groups {
        for (slot, t) in group.tensors.iter().enumerate() {
            tensors.push(TensorEntry {
                group: group.name.clone(),
                group_index: group.group_index,
                slot,
                shape: t.shape().to_vec(),
                offset,
            });
            for v in t.values() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            offset += t.len();
        }
    }
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        total_len: offset,
        tensors,
    };
    (bytes, manifest)
}

/// Rebuild groups from bytes and a manifest.
pub fn decode(bytes: &[u8], manifest: &CheckpointManifest) -> Result<Vec<ParamGroup>, CheckpointError> {
    if manifest.format_version != FORMAT_VERSION {
        return Err(CheckpointError::Corrupt(format!(
            "unsupported format_version {}",
            manifest.format_version
        )));
    }
    if bytes.len() != manifest.total_len * 8 {
        return Err(CheckpointError::Corrupt(format!(
            "expected {} bytes, found {}",
            manifest.total_len * 8,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut groups: Vec<ParamGroup> = Vec::new();
    for entry in &manifest.tensors {
        let len: usize = entry.shape.iter().product();
        let slice = values
            .get(entry.offset..entry.offset + len)
            .ok_or_else(|| CheckpointError::Corrupt(format!("tensor {} out of range", entry.group)))?;
        let tensor = Tensor::new(entry.shape.clone(), slice.to_vec())
            .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        match groups.last_mut() {
            Some(g) if g.group_index == entry.group_index => {
                if entry.slot != g.tensors.len() {
                    return Err(CheckpointError::Corrupt("tensor slots out of order".into()));
                }
                g.tensors.push(tensor);
            }
            _ => {
                if entry.group_index != groups.len() || entry.slot != 0 {
                    return Err(CheckpointError::Corrupt("groups out of order".into()));
                }
                groups.push(ParamGroup {
                    name: entry.group.clone(),
                    group_index: entry.group_index,
                    tensors: vec![tensor],
                });
            }
        }
    }
    Ok(groups)
}

/// Write `params.bin` and `params.json` into `dir`.
pub fn save(dir: &Path, groups: &[ParamGroup]) -> Result<(), CheckpointError> {
    fs::create_dir_all(dir)?;
    let (bytes, manifest) = encode(groups);
    fs::write(dir.join("params.bin"), bytes)?;
    fs::write(dir.join("params.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<Vec<ParamGroup>, CheckpointError> {
    let bytes = fs::read(dir.join("params.bin"))?;
    let manifest: CheckpointManifest = serde_json::from_slice(&fs::read(dir.join("params.json"))?)?;
    decode(&bytes, &manifest)
}

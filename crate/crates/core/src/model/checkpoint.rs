//! Binary checkpoint layout:
//!
//! ```text
//! b"MKDCKPT1"                         8-byte magic (last byte is the format version)
//! u64 little-endian                   manifest length in bytes
//! manifest                            UTF-8 JSON: config, array names/shapes/offsets
//! f32 little-endian arrays            row-major, in manifest order
//! ```
//!
//! Values are stored at 32-bit precision, so a round trip is exact on the
//! second save but not on the first.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MKDCKPT1";
const MAGIC_STEM: &[u8; 7] = b"MKDCKPT";

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset from the start of the data section.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    config: ModelConfig,
    arrays: Vec<ArrayEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocab: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

/// Model parameters plus the vocabulary and label names needed to reuse them
/// on new text.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub vocab: Option<Vec<String>>,
    pub labels: Option<Vec<String>>,
}

impl Checkpoint {
    pub fn new(params: ModelParams) -> Self {
        Self {
            params,
            vocab: None,
            labels: None,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0;
        let arrays = self
            .params
            .named_arrays()
            .into_iter()
            .map(|(name, t)| {
                let entry = ArrayEntry {
                    name,
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += 4 * t.numel();
                entry
            })
            .collect();
        let manifest = Manifest {
            config: self.params.config.clone(),
            arrays,
            vocab: self.vocab.clone(),
            labels: self.labels.clone(),
        };
        let json = serde_json::to_vec(&manifest)?;
        let mut out = Vec::with_capacity(16 + json.len() + offset);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.params.arrays() {
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(msg);
        if bytes.len() < 16 {
            return Err(bad(format!("file too short ({} bytes)", bytes.len())));
        }
        if &bytes[..8] != CHECKPOINT_MAGIC {
            if &bytes[..7] == MAGIC_STEM {
                return Err(bad(format!("unsupported format version byte {:?}", bytes[7] as char)));
            }
            return Err(bad("bad magic bytes".into()));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let data_start = 16usize
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated manifest".into()))?;
        let manifest: Manifest = serde_json::from_slice(&bytes[16..data_start])
            .map_err(|e| bad(format!("unreadable manifest: {e}")))?;
        let specs = ModelParams::array_specs(&manifest.config);
        if specs.len() != manifest.arrays.len() {
            return Err(bad(format!(
                "manifest lists {} arrays, config implies {}",
                manifest.arrays.len(),
                specs.len()
            )));
        }
        let data = &bytes[data_start..];
        let mut arrays = Vec::with_capacity(specs.len());
        let mut used = 0;
        for ((name, shape), entry) in specs.iter().zip(&manifest.arrays) {
            if *name != entry.name || *shape != entry.shape {
                return Err(bad(format!(
                    "manifest entry {}{:?} does not match expected {name}{shape:?}",
                    entry.name, entry.shape
                )));
            }
            let numel: usize = shape.iter().product();
            let end = entry.offset + 4 * numel;
            let raw = data
                .get(entry.offset..end)
                .ok_or_else(|| bad(format!("truncated data for {name}")))?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
                .collect();
            arrays.push(Tensor::new(shape.clone(), values)?);
            used = used.max(end);
        }
        if used != data.len() {
            return Err(bad(format!("{} trailing bytes after array data", data.len() - used.min(data.len()))));
        }
        Ok(Self {
            params: ModelParams::from_arrays(manifest.config, arrays)?,
            vocab: manifest.vocab,
            labels: manifest.labels,
        })
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, checkpoint.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

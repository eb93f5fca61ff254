// SPDX-License-Identifier: MIT OR Apache-2.0

//! The `PLAB` toy model container.
//!
//! ```text
//! "PLAB"            4 bytes magic
//! version           u32 LE (currently 1)
//! header_len        u32 LE
//! header            UTF-8 JSON: {"config": ModelConfig, "tensors": [{"name", "shape"}]}
//! tensor blobs      row-major little-endian f32, in header order
//! ```

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::LoadError;
use crate::model::{ModelConfig, TransformerModel};

pub const MAGIC: &[u8; 4] = b"PLAB";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyHeader {
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], LoadError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| LoadError::Truncated(what.to_string()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32, LoadError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parse only the header; cheap validation for tooling and fuzzing.
pub fn parse_header(bytes: &[u8]) -> Result<(ToyHeader, usize), LoadError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(LoadError::BadMagic {
            expected: "PLAB".into(),
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(LoadError::UnsupportedVersion(version));
    }
    let len = r.u32("header_len")? as usize;
    let raw = r.take(len, "header")?;
    let text = std::str::from_utf8(raw).map_err(|e| LoadError::Header {
        field: "header".into(),
        reason: e.to_string(),
    })?;
    let header: ToyHeader = serde_json::from_str(text).map_err(|e| LoadError::Header {
        field: "header".into(),
        reason: e.to_string(),
    })?;
    Ok((header, r.pos))
}

pub fn from_bytes(bytes: &[u8]) -> Result<TransformerModel, LoadError> {
    let (header, offset) = parse_header(bytes)?;
    header.config.validate()?;
    let mut r = Reader { bytes, pos: offset };
    let mut tensors = HashMap::new();
    for entry in &header.tensors {
        let count = entry
            .shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| LoadError::Header {
                field: format!("tensors.{}.shape", entry.name),
                reason: "element count overflows".into(),
            })?;
        let nbytes = count.checked_mul(4).ok_or_else(|| LoadError::Truncated(entry.name.clone()))?;
        let raw = r.take(nbytes, &format!("tensor {}", entry.name))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if tensors
            .insert(entry.name.clone(), (entry.shape.clone(), data))
            .is_some()
        {
            return Err(LoadError::Header {
                field: format!("tensors.{}", entry.name),
                reason: "duplicate tensor".into(),
            });
        }
    }
    if r.pos != bytes.len() {
        return Err(LoadError::Header {
            field: "tensors".into(),
            reason: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    let digest = hex::encode(Sha256::digest(bytes));
    TransformerModel::from_tensors(header.config, tensors, digest)
}

pub fn load(path: impl AsRef<Path>) -> Result<TransformerModel, LoadError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| LoadError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    from_bytes(&bytes)
}

/// Serialize in canonical tensor order.
pub fn to_bytes(model: &TransformerModel) -> Vec<u8> {
    let tensors = model.tensors();
    let header = ToyHeader {
        config: model.config().clone(),
        tensors: tensors
            .iter()
            .map(|(name, shape, _)| TensorEntry {
                name: name.clone(),
                shape: shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, _, data) in tensors {
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! GGUF reader for llama-family models stored as F32 or F16.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic u32 = 0x46554747 | version u32 (2 or 3) | n_tensors u64 | n_kv u64
//! n_kv    x  { key: string, type: u32, value }
//! n_tensors x { name: string, n_dims: u32, dims: u64 * n_dims, type: u32, offset: u64 }
//! padding to `general.alignment` (default 32)
//! tensor data, each at data_start + offset
//! ```
//!
//! Strings are `u64` length + UTF-8 bytes. Dims are listed innermost first,
//! so a row-major `[rows, cols]` matrix appears as `[cols, rows]`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::LoadError;
use crate::model::{MlpKind, ModelConfig, NormKind, TransformerModel};
use crate::tokenizer::{TokenEncoding, Tokenizer, TokenizerFile};

pub const MAGIC: u32 = 0x4655_4747;
const DEFAULT_ALIGNMENT: u64 = 32;
// Caps keep hostile headers from requesting absurd allocations.
const MAX_DIMS: u32 = 8;
const MAX_ARRAY_PREALLOC: u64 = 1 << 16;

// ---------------------------------------------------------------------------
// Metadata values
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum GgufValue {
    U8(u8),
    I8(i8),
    U16(u16),
    I16(i16),
    U32(u32),
    I32(i32),
    F32(f32),
    Bool(bool),
    String(String),
    Array(Vec<GgufValue>),
    U64(u64),
    I64(i64),
    F64(f64),
}

impl GgufValue {
    pub fn as_u64(&self) -> Option<u64> {
        match *self {
            GgufValue::U8(v) => Some(v.into()),
            GgufValue::U16(v) => Some(v.into()),
            GgufValue::U32(v) => Some(v.into()),
            GgufValue::U64(v) => Some(v),
            GgufValue::I8(v) => u64::try_from(v).ok(),
            GgufValue::I16(v) => u64::try_from(v).ok(),
            GgufValue::I32(v) => u64::try_from(v).ok(),
            GgufValue::I64(v) => u64::try_from(v).ok(),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            GgufValue::F32(v) => Some(v.into()),
            GgufValue::F64(v) => Some(v),
            _ => self.as_u64().map(|v| v as f64),
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            GgufValue::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_array(&self) -> Option<&[GgufValue]> {
        match self {
            GgufValue::Array(a) => Some(a),
            _ => None,
        }
    }
}

/// ggml tensor type tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GgmlType(pub u32);

impl GgmlType {
    pub const F32: GgmlType = GgmlType(0);
    pub const F16: GgmlType = GgmlType(1);

    pub fn name(self) -> String {
        let known = match self.0 {
            0 => "F32",
            1 => "F16",
            2 => "Q4_0",
            3 => "Q4_1",
            6 => "Q5_0",
            7 => "Q5_1",
            8 => "Q8_0",
            9 => "Q8_1",
            10 => "Q2_K",
            11 => "Q3_K",
            12 => "Q4_K",
            13 => "Q5_K",
            14 => "Q6_K",
            15 => "Q8_K",
            16 => "IQ2_XXS",
            17 => "IQ2_XS",
            18 => "IQ3_XXS",
            19 => "IQ1_S",
            20 => "IQ4_NL",
            21 => "IQ3_S",
            22 => "IQ2_S",
            23 => "IQ4_XS",
            24 => "I8",
            25 => "I16",
            26 => "I32",
            27 => "I64",
            28 => "F64",
            29 => "IQ1_M",
            30 => "BF16",
            _ => return format!("type#{}", self.0),
        };
        known.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GgufTensorInfo {
    pub name: String,
    /// Innermost first, as stored.
    pub dims: Vec<u64>,
    pub dtype: GgmlType,
    pub offset: u64,
}

impl GgufTensorInfo {
    /// Row-major shape (outermost first).
    pub fn shape(&self) -> Vec<usize> {
        self.dims.iter().rev().map(|&d| d as usize).collect()
    }

    fn element_count(&self) -> Option<u64> {
        self.dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d))
    }
}

/// A parsed GGUF file borrowing its bytes.
#[derive(Debug, Clone)]
pub struct GgufFile<'a> {
    pub version: u32,
    pub metadata: BTreeMap<String, GgufValue>,
    pub tensors: Vec<GgufTensorInfo>,
    pub data_start: usize,
    bytes: &'a [u8],
}

// ---------------------------------------------------------------------------
// Byte reader
// ---------------------------------------------------------------------------

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: u64, what: &str) -> Result<&'a [u8], LoadError> {
        let end = usize::try_from(n)
            .ok()
            .and_then(|n| self.pos.checked_add(n))
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| LoadError::Truncated(what.to_string()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N], LoadError> {
        let b = self.take(N as u64, what)?;
        let mut out = [0u8; N];
        out.copy_from_slice(b);
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32, LoadError> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64, LoadError> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }

    fn string(&mut self, what: &str) -> Result<String, LoadError> {
        let len = self.u64(what)?;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| LoadError::Header {
            field: what.to_string(),
            reason: "string is not UTF-8".into(),
        })
    }

    fn value(&mut self, ty: u32, key: &str, depth: u32) -> Result<GgufValue, LoadError> {
        Ok(match ty {
            0 => GgufValue::U8(self.array::<1>(key)?[0]),
            1 => GgufValue::I8(self.array::<1>(key)?[0] as i8),
            2 => GgufValue::U16(u16::from_le_bytes(self.array(key)?)),
            3 => GgufValue::I16(i16::from_le_bytes(self.array(key)?)),
            4 => GgufValue::U32(self.u32(key)?),
            5 => GgufValue::I32(i32::from_le_bytes(self.array(key)?)),
            6 => GgufValue::F32(f32::from_le_bytes(self.array(key)?)),
            7 => match self.array::<1>(key)?[0] {
                0 => GgufValue::Bool(false),
                1 => GgufValue::Bool(true),
                b => {
                    return Err(LoadError::Header {
                        field: key.to_string(),
                        reason: format!("invalid bool byte {b}"),
                    })
                }
            },
            8 => GgufValue::String(self.string(key)?),
            9 => {
                if depth > 0 {
                    return Err(LoadError::Header {
                        field: key.to_string(),
                        reason: "nested arrays are not supported".into(),
                    });
                }
                let elem = self.u32(key)?;
                let count = self.u64(key)?;
                let mut items = Vec::with_capacity(count.min(MAX_ARRAY_PREALLOC) as usize);
                for _ in 0..count {
                    items.push(self.value(elem, key, depth + 1)?);
                }
                GgufValue::Array(items)
            }
            10 => GgufValue::U64(self.u64(key)?),
            11 => GgufValue::I64(i64::from_le_bytes(self.array(key)?)),
            12 => GgufValue::F64(f64::from_le_bytes(self.array(key)?)),
            other => {
                return Err(LoadError::Header {
                    field: key.to_string(),
                    reason: format!("unknown metadata value type {other}"),
                })
            }
        })
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

impl<'a> GgufFile<'a> {
    /// Parse header, metadata and tensor directory. Tensor payloads are
    /// bounds-checked but not decoded.
    pub fn parse(bytes: &'a [u8]) -> Result<Self, LoadError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.u32("magic")?;
        if magic != MAGIC {
            return Err(LoadError::BadMagic {
                expected: format!("{MAGIC:#010x}"),
                found: format!("{magic:#010x}"),
            });
        }
        let version = r.u32("version")?;
        if !(2..=3).contains(&version) {
            return Err(LoadError::UnsupportedVersion(version));
        }
        let n_tensors = r.u64("tensor_count")?;
        let n_kv = r.u64("metadata_kv_count")?;

        let mut metadata = BTreeMap::new();
        for i in 0..n_kv {
            let key = r.string(&format!("metadata key #{i}"))?;
            let ty = r.u32(&key)?;
            let value = r.value(ty, &key, 0)?;
            metadata.insert(key, value);
        }

        let mut tensors = Vec::with_capacity(n_tensors.min(MAX_ARRAY_PREALLOC) as usize);
        for i in 0..n_tensors {
            let name = r.string(&format!("tensor name #{i}"))?;
            let n_dims = r.u32(&name)?;
            if n_dims == 0 || n_dims > MAX_DIMS {
                return Err(LoadError::Header {
                    field: name,
                    reason: format!("unsupported dimension count {n_dims}"),
                });
            }
            let dims = (0..n_dims)
                .map(|_| r.u64(&name))
                .collect::<Result<Vec<_>, _>>()?;
            let dtype = GgmlType(r.u32(&name)?);
            let offset = r.u64(&name)?;
            tensors.push(GgufTensorInfo {
                name,
                dims,
                dtype,
                offset,
            });
        }

        let alignment = match metadata.get("general.alignment") {
            None => DEFAULT_ALIGNMENT,
            Some(v) => v
                .as_u64()
                .filter(|a| *a > 0 && a.is_power_of_two())
                .ok_or_else(|| LoadError::Header {
                    field: "general.alignment".into(),
                    reason: "must be a positive power of two".into(),
                })?,
        };
        let pos = r.pos as u64;
        let data_start = if tensors.is_empty() {
            pos
        } else {
            pos.div_ceil(alignment) * alignment
        };
        let data_start = usize::try_from(data_start)
            .ok()
            .filter(|&s| s <= bytes.len())
            .ok_or_else(|| LoadError::Truncated("tensor data".into()))?;

        let file = Self {
            version,
            metadata,
            tensors,
            data_start,
            bytes,
        };
        for info in &file.tensors {
            file.payload(info)?;
        }
        Ok(file)
    }

    fn payload(&self, info: &GgufTensorInfo) -> Result<Option<&'a [u8]>, LoadError> {
        let width = match info.dtype {
            GgmlType::F32 => 4u64,
            GgmlType::F16 => 2u64,
            _ => return Ok(None),
        };
        let n = info
            .element_count()
            .and_then(|n| n.checked_mul(width))
            .ok_or_else(|| LoadError::Header {
                field: info.name.clone(),
                reason: "tensor size overflows".into(),
            })?;
        let start = (self.data_start as u64)
            .checked_add(info.offset)
            .ok_or_else(|| LoadError::Truncated(format!("tensor {}", info.name)))?;
        let end = start
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len() as u64)
            .ok_or_else(|| LoadError::Truncated(format!("tensor {}", info.name)))?;
        Ok(Some(&self.bytes[start as usize..end as usize]))
    }

    /// Decode a tensor to f32, widening F16.
    pub fn tensor_f32(&self, info: &GgufTensorInfo) -> Result<Vec<f32>, LoadError> {
        let raw = self.payload(info)?.ok_or_else(|| LoadError::UnsupportedDtype {
            tensor: info.name.clone(),
            dtype: info.dtype.name(),
        })?;
        Ok(match info.dtype {
            GgmlType::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
            _ => raw
                .chunks_exact(2)
                .map(|c| half::f16::from_le_bytes([c[0], c[1]]).to_f32())
                .collect(),
        })
    }

    pub fn get(&self, key: &str) -> Option<&GgufValue> {
        self.metadata.get(key)
    }

    fn require(&self, key: &str) -> Result<&GgufValue, LoadError> {
        self.get(key).ok_or_else(|| LoadError::MissingKey(key.to_string()))
    }

    fn require_usize(&self, key: &str) -> Result<usize, LoadError> {
        self.require(key)?
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| LoadError::Header {
                field: key.to_string(),
                reason: "expected an unsigned integer".into(),
            })
    }

    pub fn architecture(&self) -> Result<&str, LoadError> {
        self.require("general.architecture")?
            .as_str()
            .ok_or_else(|| LoadError::Header {
                field: "general.architecture".into(),
                reason: "expected a string".into(),
            })
    }

    /// Map llama-family metadata to a [`ModelConfig`].
    pub fn config(&self) -> Result<ModelConfig, LoadError> {
        let arch = self.architecture()?.to_string();
        let key = |k: &str| format!("{arch}.{k}");
        let vocab_size = self
            .tensors
            .iter()
            .find(|t| t.name == "token_embd.weight")
            .map(|t| t.shape()[0])
            .ok_or_else(|| LoadError::MissingTensor("token_embd.weight".into()))?;
        let (norm_kind, norm_eps) =
            if let Some(v) = self.get(&key("attention.layer_norm_rms_epsilon")) {
                (NormKind::RmsNorm, v.as_f64())
            } else if let Some(v) = self.get(&key("attention.layer_norm_epsilon")) {
                (NormKind::LayerNorm, v.as_f64())
            } else {
                return Err(LoadError::MissingKey(key("attention.layer_norm_rms_epsilon")));
            };
        let norm_eps = norm_eps.ok_or_else(|| LoadError::Header {
            field: key("attention.layer_norm_rms_epsilon"),
            reason: "expected a float".into(),
        })? as f32;
        let has = |n: &str| self.tensors.iter().any(|t| t.name == n);
        let rope_enabled = !has("position_embd.weight");
        let n_heads = self.require_usize(&key("attention.head_count"))?;
        let n_kv_heads = match self.get(&key("attention.head_count_kv")) {
            None => None,
            Some(v) => Some(v.as_u64().ok_or_else(|| LoadError::Header {
                field: key("attention.head_count_kv"),
                reason: "expected an unsigned integer".into(),
            })? as usize),
        };
        let rope_theta = self
            .get(&key("rope.freq_base"))
            .and_then(GgufValue::as_f64)
            .unwrap_or(10_000.0) as f32;
        Ok(ModelConfig {
            n_layers: self.require_usize(&key("block_count"))?,
            d_model: self.require_usize(&key("embedding_length"))?,
            n_heads,
            n_kv_heads: n_kv_heads.filter(|&k| k != n_heads),
            d_ff: self.require_usize(&key("feed_forward_length"))?,
            vocab_size,
            max_seq_len: self.require_usize(&key("context_length"))?,
            norm_kind,
            norm_eps,
            rope_enabled,
            rope_theta,
            mlp_kind: if has("blk.0.ffn_gate.weight") {
                MlpKind::SwiGlu
            } else {
                MlpKind::Gelu
            },
        })
    }

    /// Build a tokenizer from the embedded `tokenizer.ggml.*` metadata.
    pub fn tokenizer(&self) -> Result<Tokenizer, LoadError> {
        let bad = |field: &str, reason: &str| LoadError::Header {
            field: field.to_string(),
            reason: reason.to_string(),
        };
        let model = self
            .require("tokenizer.ggml.model")?
            .as_str()
            .ok_or_else(|| bad("tokenizer.ggml.model", "expected a string"))?;
        let encoding = match model {
            "gpt2" => TokenEncoding::ByteLevel,
            "llama" => TokenEncoding::Sentencepiece,
            other => return Err(bad("tokenizer.ggml.model", &format!("unsupported model {other}"))),
        };
        let tokens = self
            .require("tokenizer.ggml.tokens")?
            .as_array()
            .ok_or_else(|| bad("tokenizer.ggml.tokens", "expected an array"))?;
        let types = self.get("tokenizer.ggml.token_type").and_then(GgufValue::as_array);
        let mut file = TokenizerFile {
            encoding,
            byte_fallback: encoding == TokenEncoding::Sentencepiece,
            ..Default::default()
        };
        for (id, tok) in tokens.iter().enumerate() {
            let s = tok
                .as_str()
                .ok_or_else(|| bad("tokenizer.ggml.tokens", "expected strings"))?;
            let id = id as u32;
            if file.vocab.insert(s.to_string(), id).is_some() {
                return Err(bad("tokenizer.ggml.tokens", &format!("duplicate token {s:?}")));
            }
            let control = types
                .and_then(|t| t.get(id as usize))
                .and_then(GgufValue::as_u64)
                .is_some_and(|t| t == 3);
            if control {
                file.special_tokens.insert(s.to_string(), id);
            }
        }
        for (name, key) in [("bos", "tokenizer.ggml.bos_token_id"), ("eos", "tokenizer.ggml.eos_token_id")] {
            if let Some(id) = self.get(key).and_then(GgufValue::as_u64) {
                file.special_tokens.insert(name.to_string(), id as u32);
            }
        }
        if let Some(merges) = self.get("tokenizer.ggml.merges").and_then(GgufValue::as_array) {
            file.merges = merges
                .iter()
                .map(|m| m.as_str().map(str::to_string))
                .collect::<Option<_>>()
                .ok_or_else(|| bad("tokenizer.ggml.merges", "expected strings"))?;
        }
        Tokenizer::from_file(file).map_err(|e| bad("tokenizer.ggml", &e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Model assembly
// ---------------------------------------------------------------------------

fn canonical_name(gguf: &str) -> Option<String> {
    let fixed = match gguf {
        "token_embd.weight" => Some("tok_embed"),
        "position_embd.weight" => Some("pos_embed"),
        "output_norm.weight" => Some("final_norm.weight"),
        "output_norm.bias" => Some("final_norm.bias"),
        "output.weight" => Some("unembed"),
        _ => None,
    };
    if let Some(f) = fixed {
        return Some(f.to_string());
    }
    let rest = gguf.strip_prefix("blk.")?;
    let (layer, suffix) = rest.split_once('.')?;
    let layer: usize = layer.parse().ok()?;
    let mapped = match suffix {
        "attn_norm.weight" => "attn_norm.weight",
        "attn_norm.bias" => "attn_norm.bias",
        "attn_q.weight" => "attn.q",
        "attn_k.weight" => "attn.k",
        "attn_v.weight" => "attn.v",
        "attn_output.weight" => "attn.o",
        "ffn_norm.weight" => "mlp_norm.weight",
        "ffn_norm.bias" => "mlp_norm.bias",
        "ffn_gate.weight" => "mlp.gate",
        "ffn_up.weight" => "mlp.up",
        "ffn_down.weight" => "mlp.down",
        _ => return None,
    };
    Some(format!("layers.{layer}.{mapped}"))
}

/// Parse and assemble a model. Every tensor must be F32 or F16.
pub fn from_bytes(bytes: &[u8]) -> Result<TransformerModel, LoadError> {
    let file = GgufFile::parse(bytes)?;
    if let Some(bad) = file
        .tensors
        .iter()
        .find(|t| t.dtype != GgmlType::F32 && t.dtype != GgmlType::F16)
    {
        return Err(LoadError::UnsupportedDtype {
            tensor: bad.name.clone(),
            dtype: bad.dtype.name(),
        });
    }
    let config = file.config()?;
    let mut tensors = HashMap::new();
    for info in &file.tensors {
        let name = canonical_name(&info.name)
            .ok_or_else(|| LoadError::UnexpectedTensor(info.name.clone()))?;
        tensors.insert(name, (info.shape(), file.tensor_f32(info)?));
    }
    if !tensors.contains_key("unembed") {
        if let Some(embed) = tensors.get("tok_embed").cloned() {
            tensors.insert("unembed".to_string(), embed);
        }
    }
    let digest = hex::encode(Sha256::digest(bytes));
    TransformerModel::from_tensors(config, tensors, digest)
}

pub fn load(path: impl AsRef<Path>) -> Result<TransformerModel, LoadError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| LoadError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn put_string(out: &mut Vec<u8>, s: &str) {
        out.extend_from_slice(&(s.len() as u64).to_le_bytes());
        out.extend_from_slice(s.as_bytes());
    }

    fn header(n_tensors: u64, n_kv: u64) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC.to_le_bytes());
        out.extend_from_slice(&3u32.to_le_bytes());
        out.extend_from_slice(&n_tensors.to_le_bytes());
        out.extend_from_slice(&n_kv.to_le_bytes());
        out
    }

    #[test]
    fn wrong_magic() {
        let mut b = header(0, 0);
        b[0] = b'X';
        assert!(matches!(GgufFile::parse(&b), Err(LoadError::BadMagic { .. })));
    }

    #[test]
    fn version_one_rejected() {
        let mut b = header(0, 0);
        b[4] = 1;
        assert_eq!(GgufFile::parse(&b).unwrap_err(), LoadError::UnsupportedVersion(1));
    }

    #[test]
    fn metadata_round() {
        let mut b = header(0, 2);
        put_string(&mut b, "general.architecture");
        b.extend_from_slice(&8u32.to_le_bytes());
        put_string(&mut b, "llama");
        put_string(&mut b, "xs");
        b.extend_from_slice(&9u32.to_le_bytes());
        b.extend_from_slice(&4u32.to_le_bytes());
        b.extend_from_slice(&2u64.to_le_bytes());
        b.extend_from_slice(&7u32.to_le_bytes());
        b.extend_from_slice(&9u32.to_le_bytes());
        let f = GgufFile::parse(&b).unwrap();
        assert_eq!(f.architecture().unwrap(), "llama");
        assert_eq!(
            f.get("xs").unwrap(),
            &GgufValue::Array(vec![GgufValue::U32(7), GgufValue::U32(9)])
        );
    }

    #[test]
    fn quantized_tensor_is_named() {
        let mut b = header(1, 0);
        put_string(&mut b, "blk.0.attn_q.weight");
        b.extend_from_slice(&2u32.to_le_bytes());
        b.extend_from_slice(&32u64.to_le_bytes());
        b.extend_from_slice(&1u64.to_le_bytes());
        b.extend_from_slice(&2u32.to_le_bytes());
        b.extend_from_slice(&0u64.to_le_bytes());
        while b.len() % 32 != 0 {
            b.push(0);
        }
        b.extend_from_slice(&[0u8; 18]);
        let err = from_bytes(&b).unwrap_err();
        assert_eq!(
            err,
            LoadError::UnsupportedDtype {
                tensor: "blk.0.attn_q.weight".into(),
                dtype: "Q4_0".into()
            }
        );
    }

    #[test]
    fn truncated_payload() {
        let mut b = header(1, 0);
        put_string(&mut b, "token_embd.weight");
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&100u64.to_le_bytes());
        b.extend_from_slice(&0u32.to_le_bytes());
        b.extend_from_slice(&0u64.to_le_bytes());
        assert!(matches!(GgufFile::parse(&b), Err(LoadError::Truncated(_))));
    }

    #[test]
    fn missing_key_is_named() {
        let mut b = header(0, 0);
        b.truncate(24);
        let f = GgufFile::parse(&b).unwrap();
        assert_eq!(
            f.architecture().unwrap_err(),
            LoadError::MissingKey("general.architecture".into())
        );
    }

    #[test]
    fn name_mapping() {
        assert_eq!(canonical_name("blk.3.ffn_gate.weight").unwrap(), "layers.3.mlp.gate");
        assert_eq!(canonical_name("output.weight").unwrap(), "unembed");
        assert!(canonical_name("blk.x.attn_q.weight").is_none());
        assert!(canonical_name("rope_freqs.weight").is_none());
    }
}

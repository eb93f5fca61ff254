// SPDX-License-Identifier: MIT OR Apache-2.0

//! On-disk model formats.

pub mod gguf;
pub mod toy;

use std::path::Path;

use crate::error::LoadError;
use crate::model::TransformerModel;

/// Load a model, choosing the format from the leading magic bytes.
pub fn load_model(path: impl AsRef<Path>) -> Result<TransformerModel, LoadError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| LoadError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    model_from_bytes(&bytes)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<TransformerModel, LoadError> {
    if bytes.starts_with(b"GGUF") {
        gguf::from_bytes(bytes)
    } else {
        toy::from_bytes(bytes)
    }
}

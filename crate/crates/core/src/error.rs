// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error types for the engine.

use thiserror::Error;

/// Errors raised while tokenizing text or loading a tokenizer file.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TokenizerError {
    /// A character has no vocabulary entry and byte fallback is disabled.
    #[error("character {ch:?} at byte {offset} is not representable (byte fallback disabled)")]
    Unrepresentable { ch: char, offset: usize },
    /// The byte-fallback token for a byte is missing from the vocabulary.
    #[error("byte fallback token <0x{0:02X}> missing from vocabulary")]
    MissingByteToken(u8),
    /// Token id outside the vocabulary.
    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    UnknownId { id: u32, vocab_size: usize },
    /// Malformed tokenizer file.
    #[error("invalid tokenizer file: {0}")]
    Format(String),
}

/// Errors raised while parsing a model file.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LoadError {
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("bad magic: expected {expected}, found {found}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported dtype {dtype} for tensor {tensor}")]
    UnsupportedDtype { tensor: String, dtype: String },
    #[error("missing metadata key {0}")]
    MissingKey(String),
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("unexpected tensor {0}")]
    UnexpectedTensor(String),
    #[error("shape mismatch for {tensor}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        tensor: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid header field {field}: {reason}")]
    Header { field: String, reason: String },
    #[error("i/o error reading {path}: {reason}")]
    Io { path: String, reason: String },
}

/// Errors raised by forward passes, interventions, and generation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("sequence length {len} exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("empty token sequence")]
    EmptySequence,
    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },
    #[error("layer {layer} out of range (model has {n_layers} layers)")]
    LayerOutOfRange { layer: usize, n_layers: usize },
    #[error("position {position} out of range (sequence length {len})")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("replacement vector has length {found}, expected d_model {expected}")]
    VectorLength { expected: usize, found: usize },
    #[error("replacement vector at layer {layer} position {position} is not finite")]
    NonFinite { layer: usize, position: usize },
    #[error("missing capture for layer {layer} site {site} token {token}")]
    MissingCapture {
        layer: usize,
        site: String,
        token: usize,
    },
    #[error("invalid intervention: {0}")]
    InvalidIntervention(String),
    #[error("invalid sampler: {0}")]
    InvalidSampler(String),
    #[error("invalid chat template: {0}")]
    InvalidTemplate(String),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}

pub type Result<T, E = EngineError> = std::result::Result<T, E>;

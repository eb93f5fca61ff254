// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use patchlab_core::{EngineError, LoadError, TokenizerError};
use patchlab_metrics::MetricsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read config {path}: {source}")]
    ConfigIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {reason}")]
    ConfigParse { path: PathBuf, reason: String },
    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("cannot load model {path}: {source}")]
    Model {
        path: PathBuf,
        #[source]
        source: LoadError,
    },
    #[error("cannot load tokenizer {path}: {source}")]
    Tokenizer {
        path: PathBuf,
        #[source]
        source: TokenizerError,
    },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot read report {path}: {reason}")]
    Report { path: PathBuf, reason: String },
}

impl HarnessError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        HarnessError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code: 1 config, 2 model or tokenizer, 3 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::ConfigIo { .. } | HarnessError::ConfigParse { .. } | HarnessError::Config { .. } => 1,
            HarnessError::Model { .. } | HarnessError::Tokenizer { .. } => 2,
            _ => 3,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

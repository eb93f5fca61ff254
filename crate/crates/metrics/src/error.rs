// SPDX-License-Identifier: MIT OR Apache-2.0

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("rewrite score undefined for p_before = {0}")]
    UndefinedScore(f64),
    #[error("probability {name} = {value} outside [0, 1]")]
    Probability { name: &'static str, value: f64 },
    #[error("flip ratio undefined: no record states a {0} label")]
    UndefinedRatio(String),
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("lexicon: {0}")]
    Lexicon(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, MetricsError>;

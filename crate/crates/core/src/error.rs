// SPDX-License-Identifier: MIT OR Apache-2.0

use thiserror::Error;

/// Errors raised by instance construction, parameter validation and I/O.
#[derive(Debug, Error)]
pub enum CpError {
    #[error("query point {x} is outside [0, 1]")]
    Domain { x: f64 },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid interval [{left}, {right}]: requires 0 <= left < right <= 1")]
    InvalidInterval { left: f64, right: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("only {accepted} jump estimates accepted, {requested} requested")]
    Insufficient { accepted: usize, requested: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("unknown experiment preset `{0}`")]
    UnknownPreset(String),

    #[error("csv schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = CpError> = std::result::Result<T, E>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> CpError {
    CpError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

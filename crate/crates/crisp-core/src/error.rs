//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Surface sampling exhausted its seed budget without finding enough
    /// zero-crossing points (empty or unreachable level set).
    #[error("no surface found: {converged} of {requested} samples converged")]
    SurfaceNotFound { requested: usize, converged: usize },

    /// Point-set alignment is underdetermined (cross-covariance rank < 2).
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),

    /// Malformed input to a decoder/parser (binary grid, CSV, JSON manifests).
    #[error("format error: {0}")]
    Format(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

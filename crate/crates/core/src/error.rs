//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by model construction, training, retrieval, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("channel count mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("k-means needs at least k points: n={n}, k={k}")]
    TooFewPoints { n: usize, k: usize },

    #[error("non-finite value in input: {0}")]
    NonFinite(String),

    #[error("K={k} exceeds available candidates ({available})")]
    KTooLarge { k: usize, available: usize },

    #[error("dimension {dim} not divisible by {n_subvectors} subvectors")]
    IndivisibleDim { dim: usize, n_subvectors: usize },

    #[error("code index {code} out of range for cardinality {cardinality}")]
    CodeOutOfRange { code: usize, cardinality: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("file format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("input contains NaN at position {index}")]
    NanInput { index: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no configuration meets recall target {recall_target} for n={n}, k={k}")]
    NoFeasibleConfig { n: u64, k: u64, recall_target: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid block size {block_cols} for {num_buckets} buckets: must be a multiple or a divisor")]
    BlockSize { block_cols: usize, num_buckets: usize },

    #[error("bad magic bytes {found:?}, expected \"ATKV\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),

    #[error("truncated dataset: {0}")]
    Truncated(String),

    #[error("dataset payload contains NaN at element {index}")]
    NanInPayload { index: usize },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

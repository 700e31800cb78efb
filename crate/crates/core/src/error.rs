use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape {dims:?}: {reason}")]
    InvalidShape { dims: Vec<usize>, reason: String },

    #[error("windows do not tile the map: {0}")]
    Partition(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("kernel set has {kernels} channels but the input has {input}")]
    ChannelMismatch { kernels: usize, input: usize },

    #[error("invalid ordinal kernel for channel {channel}: {reason}")]
    InvalidKernel { channel: usize, reason: String },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("label {label} outside 0..{classes}")]
    Label { label: usize, classes: usize },

    #[error("incompatible network specs: {0}")]
    Incompatible(String),

    #[error("template enumeration over {0} ranks is too large (limit 16)")]
    TooManyRanks(usize),

    #[error("kernel shapes differ: {0}")]
    MixedKernelShapes(String),

    #[error("degenerate statistic: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: bad IDX magic number {found:#010x}, expected {expected:#010x}")]
    IdxMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("{path}: bad IDX dimensions: {reason}")]
    IdxDims { path: PathBuf, reason: String },

    #[error("{path}: truncated IDX payload, expected {expected} bytes, found {found}")]
    IdxTruncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("image file holds {images} samples but label file holds {labels}")]
    IdxCountMismatch { images: usize, labels: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

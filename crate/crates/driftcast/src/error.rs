//! Crate-wide error type.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    /// Tensor shapes incompatible with the requested operation.
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A dimension or axis argument is out of range for the given shape.
    #[error("invalid {what} {value} for shape {shape:?}")]
    InvalidAxis {
        what: &'static str,
        value: usize,
        shape: Vec<usize>,
    },

    /// Input window shorter than the receptive field of a convolution stack.
    #[error("window length {len} shorter than receptive field {receptive_field}")]
    WindowTooShort { len: usize, receptive_field: usize },

    /// Inconsistent or out-of-range configuration values.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Gradient tape misuse (non-scalar loss, double backward, ...).
    #[error("tape error: {0}")]
    Tape(String),

    /// A numeric operation produced or received a non-finite value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Malformed dataset, checkpoint, snapshot, or config file contents.
    #[error("parse error in {file}: {detail}")]
    Parse { file: String, detail: String },

    /// A required input file is missing.
    #[error("missing file: {0}")]
    MissingFile(String),

    /// Stream discipline violated (out-of-order timestep, pre-online query).
    #[error("stream error: {0}")]
    Stream(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

//! Crate-wide error types.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Training aborted because the loss left the finite range. Carries the
    /// step, the learning rate in effect and the dataset indices of the batch
    /// so the offending manifest entries can be inspected.
    #[error("non-finite loss at step {step} (lr {lr:e}); batch examples {examples:?}")]
    NonFiniteLoss {
        step: u64,
        lr: f64,
        examples: Vec<usize>,
    },

    #[error("weight file: {0}")]
    WeightFile(#[from] WeightFileError),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

/// Failures while reading the binary weight / checkpoint formats. Each
/// corruption mode is reported distinctly.
#[derive(Debug, Error)]
pub enum WeightFileError {
    #[error("bad magic bytes (not a weight file)")]
    BadMagic,

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    #[error("truncated file: need {expected} bytes, have {got}")]
    Truncated { expected: usize, got: usize },

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("spec mismatch: {0}")]
    SpecMismatch(String),
}

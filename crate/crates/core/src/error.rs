use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown class `{0}`")]
    UnknownClass(String),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid crop: {0}")]
    InvalidCrop(String),

    #[error("no model registered for class `{0}`")]
    NoModel(String),

    #[error("class `{0}` has no usable instances")]
    EmptyClass(String),

    #[error("class `{0}` has no held-out instances")]
    EmptyHoldout(String),

    #[error("training diverged at iteration {iteration}: loss is {loss}")]
    Divergence { iteration: usize, loss: f64 },

    #[error("output directory {0} is not empty (pass the overwrite flag to replace it)")]
    OutputExists(PathBuf),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("image error: {0}")]
    Image(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Reasons a checkpoint file can be rejected at load time.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint checksum mismatch")]
    ChecksumMismatch,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable short identifier used in single-line CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidShape(_) => "invalid-shape",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::InvalidBatch(_) => "invalid-batch",
            Error::Config(_) => "config",
            Error::UnknownClass(_) => "unknown-class",
            Error::InvalidCamera(_) => "invalid-camera",
            Error::InvalidCrop(_) => "invalid-crop",
            Error::NoModel(_) => "no-model",
            Error::EmptyClass(_) => "empty-class",
            Error::EmptyHoldout(_) => "empty-holdout",
            Error::Divergence { .. } => "divergence",
            Error::OutputExists(_) => "output-exists",
            Error::Checkpoint(CheckpointError::BadMagic) => "checkpoint-format",
            Error::Checkpoint(CheckpointError::VersionMismatch { .. }) => "checkpoint-version",
            Error::Checkpoint(CheckpointError::Truncated) => "checkpoint-truncated",
            Error::Checkpoint(CheckpointError::ChecksumMismatch) => "checkpoint-checksum",
            Error::Checkpoint(CheckpointError::Malformed(_)) => "checkpoint-malformed",
            Error::Image(_) => "image",
            Error::Io { .. } => "io",
        }
    }
}

macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidShape(format!($($arg)*))
    };
}
pub(crate) use shape_err;

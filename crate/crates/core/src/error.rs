use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tacton spec: {}", .0.join("; "))]
    InvalidSpec(Vec<String>),

    #[error("unsupported resampling ratio: {from} Hz -> {to} Hz")]
    UnsupportedRatio { from: u32, to: u32 },

    #[error("waveform too long: {len} samples exceeds {max}")]
    TooLong { len: usize, max: usize },

    #[error("expected sample rate {expected} Hz, got {actual} Hz")]
    SampleRate { expected: u32, actual: u32 },

    #[error("{name} = {value} exceeds bound {bound}")]
    BoundViolation { name: &'static str, value: f64, bound: f64 },

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("autodiff: {0}")]
    Tape(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("checkpoint version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable short name of the variant, for machine-readable reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) => "invalid_spec",
            Error::UnsupportedRatio { .. } => "unsupported_ratio",
            Error::TooLong { .. } => "too_long",
            Error::SampleRate { .. } => "sample_rate",
            Error::BoundViolation { .. } => "bound_violation",
            Error::Shape { .. } => "shape",
            Error::NonFinite { .. } => "non_finite",
            Error::Tape(_) => "autodiff",
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::Corrupt(_) => "corrupt_checkpoint",
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => "not_found",
            Error::Io { .. } => "io",
            Error::Json(_) => "schema",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Walsh rank {0}: must be a power of two and at least 2")]
    InvalidRank(usize),

    #[error("codebook of rank {rank} holds at most {max} classes, {requested} requested")]
    Capacity {
        rank: usize,
        max: usize,
        requested: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("wiring error: {0}")]
    Wiring(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error in {field}: {message}")]
    Format { field: String, message: String },

    #[error("incompatible checkpoint version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn format(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            message: msg.into(),
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable category, used by the CLI for error lines and exit codes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidRank(_) => "invalid-rank",
            Error::Capacity { .. } => "capacity-error",
            Error::Shape(_) => "shape-error",
            Error::Contract(_) => "contract-error",
            Error::Wiring(_) => "wiring-error",
            Error::InsufficientData(_) => "insufficient-data",
            Error::Parse { .. } => "parse-error",
            Error::Format { .. } => "format-error",
            Error::Version { .. } => "version-error",
            Error::Diverged { .. } => "training-diverged",
            Error::Unsupported(_) => "unsupported",
            Error::Io { .. } => "io-error",
        }
    }
}

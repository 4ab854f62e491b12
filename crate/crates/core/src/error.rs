use std::path::PathBuf;

use thiserror::Error;

use crate::train::checkpoint::Checkpoint;

/// Incompatible tensor extents.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("dimension error: {msg}")]
pub struct ShapeError {
    pub msg: String,
}

impl ShapeError {
    pub fn new(msg: impl Into<String>) -> Self {
        ShapeError { msg: msg.into() }
    }

    pub fn mismatch(op: &str, a: &[usize], b: &[usize]) -> Self {
        ShapeError::new(format!("{op}: incompatible shapes {a:?} and {b:?}"))
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Shape(#[from] ShapeError),

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("gradient check invalid: {0}")]
    CheckInvalid(String),

    #[error("encoder inner loop produced non-finite loss at step {step}")]
    Encode { step: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file at byte offset {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("quadrature error: {0}")]
    Quadrature(String),

    #[error("undefined metric: {0}")]
    Undefined(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged {
        epoch: usize,
        loss: f64,
        last_good: Option<Box<Checkpoint>>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            msg: msg.into(),
        }
    }

    /// Process exit status: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Shape(_)
            | Error::Io { .. }
            | Error::Format { .. }
            | Error::Checksum { .. }
            | Error::Domain(_)
            | Error::Geometry(_)
            | Error::Quadrature(_) => 2,
            Error::NonFinite(_)
            | Error::CheckInvalid(_)
            | Error::Encode { .. }
            | Error::Undefined(_)
            | Error::Diverged { .. } => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

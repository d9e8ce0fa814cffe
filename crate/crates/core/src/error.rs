use thiserror::Error;

/// Errors produced by the analysis, simulation and configuration layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("error-event search exceeded the length cap of {cap} bits")]
    SearchCap { cap: usize },

    #[error("start position {start} out of range for an event of {len} bits in a {total}-bit codeword")]
    StartOutOfRange { start: usize, len: usize, total: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pole of the Laplace transform at s = {re} + {im}j")]
    Pole { re: f64, im: f64 },

    #[error("numerical diagnostic: {0}")]
    Numerical(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) | Error::Pole { .. } | Error::SearchCap { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

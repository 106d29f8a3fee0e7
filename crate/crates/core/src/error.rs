use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not agree.
    #[error("dimension error in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// Invalid configuration value or combination.
    #[error("configuration error: {0}")]
    Config(String),

    /// API misuse, e.g. calling backward on a non-scalar.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error at byte offset {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("{path}:{line}: {message}")]
    Row {
        path: String,
        line: u64,
        message: String,
    },

    #[error("checkpoint load error: {0}")]
    Load(String),

    /// Input data missing or inconsistent.
    #[error("data error: {0}")]
    Data(String),

    #[error("missing input for view {0}")]
    MissingView(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    /// Non-finite loss or gradient during optimization.
    #[error("divergence: {0}")]
    Divergence(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}

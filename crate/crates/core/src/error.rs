use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An input lies outside the domain of a closed-form model.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("malformed expression: {0}")]
    Expression(String),

    /// Every probed constant vector produced non-finite predictions.
    #[error("expression cannot be fitted: all probes non-finite")]
    Unfittable,

    /// The constraint mask left no admissible token.
    #[error("sampling dead end at position {0}")]
    DeadEnd(usize),

    #[error("training failed: {0}")]
    Training(String),

    #[error("checkpoint version mismatch: file has {found}, expected {expected}")]
    Version { found: String, expected: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

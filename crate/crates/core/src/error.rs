use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration values or incompatible shapes.
    #[error("configuration error: {0}")]
    Config(String),

    /// Caller misuse: bad arguments, mismatched inputs, unknown keys.
    #[error("usage error: {0}")]
    Usage(String),

    /// A non-finite value appeared during training or evaluation.
    #[error("numeric error{}: {message}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    Numeric { step: Option<usize>, message: String },

    #[error("parse error in {path} line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("experiment error: {0}")]
    Experiment(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn numeric(message: impl Into<String>) -> Self {
        Error::Numeric { step: None, message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Attaches a step index to a numeric error that does not carry one yet.
    pub fn at_step(self, step: usize) -> Self {
        match self {
            Error::Numeric { step: None, message } => Error::Numeric { step: Some(step), message },
            other => other,
        }
    }

    /// True for failures caused by training numerics rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric { .. } | Error::Experiment(_))
    }
}

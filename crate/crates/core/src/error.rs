use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke a shape or domain contract.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("ingestion error at line {line}: {message}")]
    Ingestion { line: u64, message: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("oracle error: {0}")]
    Oracle(String),

    /// Non-finite values met during optimization.
    #[error("training error{}: {message}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    Training { step: Option<u64>, message: String },

    #[error("transfer error at integration step {step}: {message}")]
    Transfer { step: usize, message: String },

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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn training(msg: impl Into<String>) -> Self {
        Error::Training {
            step: None,
            message: msg.into(),
        }
    }

    /// Attach a training step index, keeping the original message.
    pub fn at_step(self, step: u64) -> Self {
        match self {
            Error::Training { message, .. } => Error::Training {
                step: Some(step),
                message,
            },
            Error::Transfer { .. } | Error::Io { .. } | Error::Json(_) => self,
            other => Error::Training {
                step: Some(step),
                message: other.to_string(),
            },
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) => 2,
            Error::Size(_)
            | Error::Ingestion { .. }
            | Error::Degenerate(_)
            | Error::Oracle(_)
            | Error::Io { .. }
            | Error::Json(_) => 3,
            Error::Training { .. } | Error::Transfer { .. } => 4,
        }
    }
}

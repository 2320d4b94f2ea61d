//! Crate-wide error type and exit-code mapping for the CLI.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A log line that looks like a message but cannot be parsed.
    #[error("cannot parse log line ({reason}): {line:?}")]
    ParseLine { line: String, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot fit an idf table on an empty corpus")]
    EmptyCorpus,

    #[error("dialogue with {turns} turns cannot produce a record; at least {min} are required")]
    InvalidDialogue { turns: usize, min: usize },

    #[error("dataset generation failed: {0}")]
    Generation(String),

    #[error("training failed at batch {batch}: {reason}")]
    Training { batch: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code contract: 1 validation, 2 I/O, 3 internal numeric error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::Training { .. } => 3,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("rejected input: {0}")]
    RejectedInput(String),

    #[error("numeric overflow: {0}")]
    NumericOverflow(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// Malformed binary stream; `offset` is the byte position where decoding failed.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: usize, msg: String },

    /// Malformed text input; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Malformed or inconsistent histogram dataset file; `line` is 1-based.
    #[error("format error at line {line}: {msg}")]
    DatasetFormat { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn rejected(msg: impl Into<String>) -> Self {
        Error::RejectedInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by bad input or configuration, as opposed to failures
    /// during computation or I/O.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::RejectedInput(_)
                | Error::Unsupported(_)
                | Error::Format { .. }
                | Error::Parse { .. }
                | Error::DatasetFormat { .. }
                | Error::Validation(_)
        )
    }
}

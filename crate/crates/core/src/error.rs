use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// The CLI maps [`Error::Training`] to exit code 2 and everything else to 1.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-contract input (shapes, labels, parameters).
    #[error("input error: {0}")]
    Input(String),

    /// A model could not be fitted (degenerate labels, impossible bootstrap).
    #[error("training error: {0}")]
    Training(String),

    /// A CSV file could not be turned into a dataset.
    #[error("load error in {path} at row {row}, column {column}: {message}")]
    Load {
        path: PathBuf,
        /// 1-based data row (0 refers to the header).
        row: usize,
        column: String,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// Wraps an error with the experiment cell it came from.
    #[error("{method}, repetition {repetition}: {source}")]
    Context {
        method: String,
        repetition: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn training(msg: impl Into<String>) -> Self {
        Error::Training(msg.into())
    }

    /// True when the root cause is a fitting failure rather than bad input.
    pub fn is_training(&self) -> bool {
        match self {
            Error::Training(_) => true,
            Error::Context { source, .. } => source.is_training(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

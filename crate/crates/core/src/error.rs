use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("empty file: {}", .0.display())]
    EmptyFile(PathBuf),

    #[error("row {row}: expected {expected} columns, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}, column {column}: cannot parse {value:?} as a number")]
    NonNumeric {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("row {row}, column {column}: invalid label {value:?}")]
    InvalidLabel {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("model {model}: {source}")]
    Model {
        model: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("AUC undefined: scores need both positive and negative labels")]
    UndefinedAuc,

    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("corrupt artifact: {0}")]
    Corrupt(String),

    #[error("missing attack model for point {0}")]
    MissingPointModel(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures raised by the numerics rather than by bad input or I/O.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFiniteLoss { .. } | Error::DegenerateLabels(_) | Error::UndefinedAuc => true,
            Error::Model { source, .. } => source.is_numeric(),
            _ => false,
        }
    }

    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_)
            | Error::MissingFile(_)
            | Error::EmptyFile(_)
            | Error::Truncated { .. }
            | Error::Corrupt(_) => true,
            Error::Model { source, .. } => source.is_io(),
            _ => false,
        }
    }
}

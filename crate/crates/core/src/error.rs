use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("split failed: {0}")]
    Split(String),

    #[error("class `{0}` absent from the training part")]
    MissingClass(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("feature count mismatch: model expects {expected} columns, input has {actual}")]
    ColumnMismatch { expected: usize, actual: usize },

    #[error("similarity undefined: {0}")]
    UndefinedSimilarity(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid selection scheme `{0}`")]
    Scheme(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("selection failed: {0}")]
    Selection(String),

    #[error("population initialization failed after {attempts} attempts ({live} of {target} individuals)")]
    Initialization {
        attempts: usize,
        live: usize,
        target: usize,
    },

    #[error("training failed: {0}")]
    Training(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("model file invalid: {0}")]
    ModelFormat(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("statistics error: {0}")]
    Stats(String),

    #[error("label `{0}` is not in the class catalog")]
    UnknownLabel(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

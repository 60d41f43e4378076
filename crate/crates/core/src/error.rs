use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, MfrsError>;

#[derive(Debug, Error)]
pub enum MfrsError {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("range error: index {index} out of range ({context})")]
    Range { index: usize, context: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch in {what}: expected {expected}, got {actual}")]
    Shape {
        what: &'static str,
        expected: String,
        actual: String,
    },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("numeric error in parameter `{param}`: {detail}")]
    Numeric { param: String, detail: String },

    #[error("parse error at row {row}, column {column}: {detail}")]
    Parse {
        row: usize,
        column: usize,
        detail: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl MfrsError {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Self::Validation(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub(crate) fn range(index: usize, context: impl Into<String>) -> Self {
        Self::Range {
            index,
            context: context.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for bad input or configuration, 2 for runtime and
    /// numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Numeric { .. } | Self::Io { .. } => 2,
            _ => 1,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unsupported task: {0}")]
    UnsupportedTask(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(
        "non-finite loss at epoch {epoch}, step {step}: regular={loss_regular}, \
         balanced={loss_balanced}, costs={costs:?}"
    )]
    NonFinite {
        epoch: usize,
        step: usize,
        loss_regular: f64,
        loss_balanced: f64,
        costs: Option<(f64, f64)>,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

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

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the failure stems from bad input or configuration rather than
    /// from a runtime or numeric problem.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Schema(_)
                | Error::Parse { .. }
                | Error::Validation(_)
                | Error::Shape(_)
                | Error::UnsupportedTask(_)
                | Error::Config(_)
        )
    }
}

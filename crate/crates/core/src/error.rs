use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("image {image_id}: field {field}: {message}")]
    Validation {
        image_id: String,
        field: String,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("image {0} could not be resolved")]
    UnresolvedImage(String),

    #[error("image {image}: {message}")]
    Image { image: String, message: String },

    #[error("non-finite loss at iteration {iteration}: {detail}")]
    NonFiniteLoss { iteration: usize, detail: String },

    #[error("reconstructor failed at rotation {angle} deg: {message}")]
    Reconstructor { angle: f64, message: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for problems with the inputs (as opposed to failures while running).
    pub fn is_data_error(&self) -> bool {
        !matches!(
            self,
            Error::NonFiniteLoss { .. } | Error::Reconstructor { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

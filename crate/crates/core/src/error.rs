use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("id collision while merging corpora: {}", .0.join(", "))]
    IdCollision(Vec<String>),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("unknown backbone `{name}`; available: {}", .available.join(", "))]
    UnknownBackbone { name: String, available: Vec<String> },

    #[error("model state error: {0}")]
    State(String),

    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("fold {fold} failed: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("external encoder error: {0}")]
    External(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for errors raised while optimizing a model, as opposed to bad
    /// input or configuration.
    pub fn is_training_failure(&self) -> bool {
        match self {
            Error::NonFiniteLoss { .. } | Error::External(_) => true,
            Error::Fold { source, .. } => source.is_training_failure(),
            _ => false,
        }
    }
}

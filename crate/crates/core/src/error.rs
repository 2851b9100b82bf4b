use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch on {axis}: expected {expected}, found {found}")]
    ShapeMismatch {
        op: &'static str,
        axis: &'static str,
        expected: String,
        found: String,
    },
    #[error("{op}: backward called without a saved {what} from the forward pass")]
    MissingActivation { op: &'static str, what: &'static str },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed {kind} file: {reason}")]
    Format { kind: &'static str, reason: String },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, axis: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::ShapeMismatch {
            op,
            axis,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn format(kind: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            kind,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

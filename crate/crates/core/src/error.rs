use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid geometry in {op}: {detail}")]
    InvalidGeometry { op: &'static str, detail: String },

    #[error("second-order differentiation is not supported through `{op}`")]
    UnsupportedSecondOrder { op: &'static str },

    #[error("backward requires a scalar output, got shape {shape:?}")]
    NonScalarOutput { shape: Vec<usize> },

    #[error("output is detached from the graph (no tracked inputs)")]
    Detached,

    #[error("{op} of an empty tensor")]
    Empty { op: &'static str },

    #[error("degenerate ellipse #{index}: semi-axes must be positive, got ({a}, {b})")]
    DegenerateEllipse { index: usize, a: f64, b: f64 },

    #[error("invalid value for `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed file: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("checkpoint does not match the network: {0}")]
    CheckpointMismatch(String),

    #[error("dataset is empty")]
    EmptyDataset,
}

impl Error {
    /// Whether the error stems from invalid user input rather than a failure
    /// while doing the work.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::DegenerateEllipse { .. } | Error::CheckpointMismatch(_)
        )
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn geometry(op: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidGeometry {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
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

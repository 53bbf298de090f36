//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Vector or matrix widths that do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An operation was called in the wrong lifecycle state.
    #[error("invalid state: {0}")]
    State(String),

    /// A non-finite value reached a parameter update or loss.
    #[error("non-finite value in `{param}`")]
    Numeric { param: String },

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// A distribution parameter that makes the requested construction degenerate.
    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    /// Empty or insufficient input data.
    #[error("data error: {0}")]
    Data(String),

    /// Topology or document validation failure; one entry per offender.
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("routing error: {0}")]
    Routing(String),

    /// Rank-deficient transform; lists the dependent rows or columns.
    #[error("singular transform: dependent {axis}s {indices:?}")]
    Singular { axis: &'static str, indices: Vec<usize> },

    #[error("invalid action: {0}")]
    Action(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

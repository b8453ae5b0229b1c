use thiserror::Error;

/// Every failure the library reports.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point outside the unit ball: norm {norm}")]
    Domain { norm: f64 },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("degenerate field: {0}")]
    DegenerateField(String),

    #[error("path degenerate after {iterations} iterations: {reason}")]
    PathDegenerate { iterations: u64, reason: String },

    #[error("grid needs {required} points, above the limit of {limit}")]
    GridBudget { required: f64, limit: f64 },

    #[error("code construction for k = {k} found only {achieved} of {wanted} codewords")]
    CodeConstruction { k: usize, achieved: usize, wanted: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scale a = {a} outside the admissible range [{lo}, {hi}]")]
    Domain { a: f64, lo: f64, hi: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("membership check not supported: {0}")]
    UnsupportedCheck(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

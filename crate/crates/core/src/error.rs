use thiserror::Error;

/// Errors raised by the estimation toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// All residuals are (numerically) zero, so the variance intercept is
    /// unbounded below.
    #[error("degenerate residuals: variance fit is unbounded")]
    DegenerateResiduals,
}

pub type Result<T> = std::result::Result<T, Error>;

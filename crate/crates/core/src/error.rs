use thiserror::Error;

/// Errors raised by covariance construction, factorizations and GP evaluations.
#[derive(Debug, Error)]
pub enum GpError {
    #[error("unsupported smoothness nu = {0}; only 0.5, 1.5 and 2.5 are available")]
    UnsupportedSmoothness(f64),
    #[error("negative distance {0}")]
    NegativeDistance(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("cholesky factorization failed at pivot {pivot} (value {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("sparsity pattern does not match the symbolic factorization")]
    PatternMismatch,
    #[error("non-positive conditional variance {variance:e} at ordered position {position}")]
    NonPositiveConditionalVariance { position: usize, variance: f64 },
    #[error("negative predictive variance {0:e}")]
    NegativeVariance(f64),
    #[error("{0}")]
    OutOfRange(String),
    #[error("log-likelihood is not finite at the initial parameters")]
    NonFiniteInit,
    #[error("csv error on line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GpError>;

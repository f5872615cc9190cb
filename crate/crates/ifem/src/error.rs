use thiserror::Error;

/// Crate-wide error type.
///
/// The variants mirror the failure classes the modules can hit: bad
/// physical inputs (`Domain`), inconsistent setup (`Config`), quadrature or
/// diagonalization breakdown (`Numeric`), statistically empty estimation
/// inputs (`Estimation`), and malformed data files (`Data`).
#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the physical or mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Inconsistent or incomplete configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// A numerical method failed to converge; the message carries the
    /// diagnostic (interval counts, residuals).
    #[error("numeric error: {0}")]
    Numeric(String),
    /// An estimator was handed zero usable outcomes.
    #[error("estimation error: {0}")]
    Estimation(String),
    /// A data file could not be parsed or failed validation.
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

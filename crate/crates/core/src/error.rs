use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("integer overflow while computing {what}")]
    Overflow { what: &'static str },

    #[error("integrand returned non-finite value {value} at r = {r:e}")]
    NonFiniteIntegrand { r: f64, value: f64 },

    #[error("quadrature did not converge on ({a}, {b}): error estimate {error_estimate:e} after {panels} panels")]
    QuadratureNotConverged {
        a: f64,
        b: f64,
        error_estimate: f64,
        panels: usize,
    },

    #[error("candidate solution is not positive: f({r:e}) = {value:e}")]
    NotPositive { r: f64, value: f64 },

    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("manifold mismatch: {0}")]
    ManifoldMismatch(String),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

//! Error type shared by every pricing module.

use thiserror::Error;

/// Failure modes of the pricing, convention and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PricingError {
    /// Malformed or non-finite arguments.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Arguments are well formed but outside the domain of the operation
    /// (e.g. a quote violating the no-arbitrage bounds).
    #[error("domain error: {0}")]
    Domain(String),
    /// An iterative or quadrature routine failed to reach its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// The convention denominator vanishes so a* is undefined.
    #[error("degenerate convention: {0}")]
    DegenerateConvention(String),
    /// The model itself is degenerate (e.g. zero exchange volatility).
    #[error("degenerate model: {0}")]
    DegenerateModel(String),
}

pub type Result<T> = std::result::Result<T, PricingError>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(PricingError::InvalidInput(format!("{name} must be finite, got {value}")))
    }
}

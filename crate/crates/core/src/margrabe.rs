//! Exchange options `(S_X - S_Y)^+` under joint lognormality.
//!
//! The Margrabe price is a Black-Scholes call on `X` whose log strike is the
//! log spot of `Y`, so every routine here delegates to [`crate::blackscholes`].

use serde::{Deserialize, Serialize};

use crate::blackscholes::{self, VanillaSpec};
use crate::error::{ensure_finite, PricingError, Result};

/// Observed exchange-option quote.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExchangeQuote {
    /// Log spot of the asset received.
    pub x: f64,
    /// Log spot of the asset delivered.
    pub y: f64,
    pub maturity: f64,
    pub price: Option<f64>,
}

/// Margrabe price with exchange volatility `gamma`.
pub fn margrabe_price(x: f64, y: f64, gamma: f64, maturity: f64) -> Result<f64> {
    if !(maturity > 0.0) {
        return Err(PricingError::InvalidInput(format!("maturity must be positive, got {maturity}")));
    }
    blackscholes::bs_price(&VanillaSpec::new(0.0, maturity, x, y, gamma))
}

/// Exchange volatility obtained by substituting leg implied vols into the
/// constant-volatility formula: `sqrt(I_X^2 + I_Y^2 - 2 rho I_X I_Y)`.
pub fn convention_gamma(vol_x: f64, vol_y: f64, rho: f64) -> Result<f64> {
    ensure_finite("I_X", vol_x)?;
    ensure_finite("I_Y", vol_y)?;
    ensure_finite("rho", rho)?;
    if !(-1.0..=1.0).contains(&rho) {
        return Err(PricingError::InvalidInput(format!("correlation {rho} outside [-1, 1]")));
    }
    if vol_x < 0.0 || vol_y < 0.0 {
        return Err(PricingError::InvalidInput(format!("leg volatilities must be non-negative, got {vol_x}, {vol_y}")));
    }
    // (I_X - I_Y)^2 + 2 (1 - rho) I_X I_Y is non-negative term by term.
    let var = (vol_x - vol_y).powi(2) + 2.0 * (1.0 - rho) * vol_x * vol_y;
    Ok(var.max(0.0).sqrt())
}

/// Exchange volatility implied by a quoted price.
pub fn exchange_implied_vol(price: f64, x: f64, y: f64, maturity: f64) -> Result<f64> {
    blackscholes::implied_vol(price, 0.0, maturity, x, y)
}

/// Implied correlation together with a flag telling whether it is a
/// genuine correlation. Values outside `[-1, 1]` are kept as computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpliedCorrelation {
    pub value: f64,
    pub in_range: bool,
}

/// Correlation that reproduces `gamma_hat` from the leg vols.
pub fn implied_correlation(gamma_hat: f64, vol_x: f64, vol_y: f64) -> Result<ImpliedCorrelation> {
    ensure_finite("gamma_hat", gamma_hat)?;
    ensure_finite("I_X", vol_x)?;
    ensure_finite("I_Y", vol_y)?;
    let denom = 2.0 * vol_x * vol_y;
    if denom == 0.0 {
        return Err(PricingError::Domain("implied correlation needs non-zero leg volatilities".into()));
    }
    let value = (vol_x * vol_x + vol_y * vol_y - gamma_hat * gamma_hat) / denom;
    Ok(ImpliedCorrelation { value, in_range: (-1.0..=1.0).contains(&value) })
}

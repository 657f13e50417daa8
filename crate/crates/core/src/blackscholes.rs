//! Black-Scholes call pricing with zero rates in log coordinates, plus a
//! safeguarded Newton inversion for implied volatility.
//!
//! Prices are quoted as `e^x N(d1) - e^k N(d2)` where `x` is the log spot
//! and `k` the log strike. A log strike of `-inf` denotes a zero strike.

use crate::error::{ensure_finite, PricingError, Result};
use crate::normal;

/// Lower end of the implied-volatility bracket.
pub const VOL_LOWER: f64 = 1e-6;
/// Initial upper end of the implied-volatility bracket.
pub const VOL_UPPER: f64 = 5.0;
/// Newton seed.
pub const VOL_SEED: f64 = 0.5;
/// Price tolerance of the inversion, relative to the spot `e^x`.
pub const PRICE_TOL: f64 = 1e-12;

const MAX_ITER: usize = 200;
const MAX_UPPER: f64 = 100.0;

/// A European call in log coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VanillaSpec {
    /// Valuation time in years.
    pub t: f64,
    /// Maturity in years.
    pub maturity: f64,
    /// Log spot.
    pub x: f64,
    /// Log strike; `f64::NEG_INFINITY` for a zero strike.
    pub k: f64,
    /// Annualized volatility.
    pub sigma: f64,
}

impl VanillaSpec {
    pub fn new(t: f64, maturity: f64, x: f64, k: f64, sigma: f64) -> Self {
        Self { t, maturity, x, k, sigma }
    }

    /// Time to maturity.
    pub fn tau(&self) -> f64 {
        self.maturity - self.t
    }

    fn validate(&self) -> Result<()> {
        ensure_finite("t", self.t)?;
        ensure_finite("maturity", self.maturity)?;
        ensure_finite("x", self.x)?;
        ensure_finite("sigma", self.sigma)?;
        if self.k.is_nan() || self.k == f64::INFINITY {
            return Err(PricingError::InvalidInput(format!("log strike must be finite or -inf, got {}", self.k)));
        }
        if self.tau() < 0.0 {
            return Err(PricingError::InvalidInput(format!("maturity {} precedes t = {}", self.maturity, self.t)));
        }
        if self.sigma < 0.0 {
            return Err(PricingError::InvalidInput(format!("volatility must be non-negative, got {}", self.sigma)));
        }
        if !self.x.exp().is_finite() || self.x.exp() == 0.0 {
            return Err(PricingError::InvalidInput(format!("exp(x) not representable for x = {}", self.x)));
        }
        Ok(())
    }
}

/// `max(e^x - e^k, 0)`.
#[inline]
pub fn intrinsic(x: f64, k: f64) -> f64 {
    (x.exp() - k.exp()).max(0.0)
}

fn d1(x: f64, k: f64, total_vol: f64) -> f64 {
    (x - k) / total_vol + 0.5 * total_vol
}

/// Unchecked call value given the total volatility `sigma * sqrt(tau)`.
pub(crate) fn call_from_total_vol(x: f64, k: f64, total_vol: f64) -> f64 {
    if k == f64::NEG_INFINITY {
        return x.exp();
    }
    if total_vol <= 0.0 {
        return intrinsic(x, k);
    }
    let d1 = d1(x, k, total_vol);
    let d2 = d1 - total_vol;
    x.exp() * normal::cdf(d1) - k.exp() * normal::cdf(d2)
}

/// Black-Scholes call price; at `t == maturity` returns the intrinsic value.
pub fn bs_price(spec: &VanillaSpec) -> Result<f64> {
    spec.validate()?;
    let tau = spec.tau();
    Ok(call_from_total_vol(spec.x, spec.k, spec.sigma * tau.sqrt()))
}

/// Analytic vega `e^x phi(d1) sqrt(tau)`.
pub fn bs_vega(spec: &VanillaSpec) -> Result<f64> {
    spec.validate()?;
    let tau = spec.tau();
    if tau == 0.0 || spec.k == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let total = spec.sigma * tau.sqrt();
    if total <= 0.0 {
        return Ok(0.0);
    }
    Ok(spec.x.exp() * normal::pdf(d1(spec.x, spec.k, total)) * tau.sqrt())
}

/// Unchecked out-of-the-money value: the call when `k >= x`, else the put.
///
/// Both branches subtract two tail probabilities of similar size, so deep
/// wings keep their relative precision.
pub(crate) fn otm_from_total_vol(x: f64, k: f64, total_vol: f64) -> f64 {
    if k >= x {
        return call_from_total_vol(x, k, total_vol);
    }
    if total_vol <= 0.0 {
        return 0.0;
    }
    let d1 = d1(x, k, total_vol);
    let d2 = d1 - total_vol;
    k.exp() * normal::cdf(-d2) - x.exp() * normal::cdf(-d1)
}

/// Implied volatility of a call quote.
///
/// Newton iterations from `VOL_SEED`, falling back to bisection whenever a
/// step leaves the bracket maintained around the root. The quote must lie
/// strictly inside `(intrinsic, e^x)`.
pub fn implied_vol(price: f64, t: f64, maturity: f64, x: f64, k: f64) -> Result<f64> {
    let tau = check_quote_inputs(price, t, maturity, x, k)?;
    let spot = x.exp();
    let lower_bound = intrinsic(x, k);
    if !(price > lower_bound && price < spot) {
        return Err(PricingError::Domain(format!("price {price} outside no-arbitrage bounds ({lower_bound}, {spot})")));
    }
    solve_vol(price, tau, x, k, call_from_total_vol)
}

/// Implied volatility of an out-of-the-money quote: a call when `k >= x`,
/// a put otherwise. Deep-wing quotes invert without the cancellation of an
/// in-the-money call.
pub fn implied_vol_otm(price: f64, t: f64, maturity: f64, x: f64, k: f64) -> Result<f64> {
    let tau = check_quote_inputs(price, t, maturity, x, k)?;
    let upper = if k >= x { x.exp() } else { k.exp() };
    if !(price > 0.0 && price < upper) {
        return Err(PricingError::Domain(format!("OTM price {price} outside no-arbitrage bounds (0, {upper})")));
    }
    solve_vol(price, tau, x, k, otm_from_total_vol)
}

fn check_quote_inputs(price: f64, t: f64, maturity: f64, x: f64, k: f64) -> Result<f64> {
    ensure_finite("price", price)?;
    ensure_finite("x", x)?;
    ensure_finite("k", k)?;
    ensure_finite("t", t)?;
    ensure_finite("maturity", maturity)?;
    let tau = maturity - t;
    if tau <= 0.0 {
        return Err(PricingError::Domain(format!("implied vol needs positive time to maturity, got {tau}")));
    }
    Ok(tau)
}

fn solve_vol(price: f64, tau: f64, x: f64, k: f64, model: fn(f64, f64, f64) -> f64) -> Result<f64> {
    let spot = x.exp();
    let sqrt_tau = tau.sqrt();
    let value = |sigma: f64| model(x, k, sigma * sqrt_tau) - price;
    let tol = PRICE_TOL * spot;

    let mut lo = VOL_LOWER;
    let mut hi = VOL_UPPER;
    if value(lo) > 0.0 {
        // Quote is below the model price at the volatility floor; only an
        // exact hit at the floor would be acceptable.
        if value(lo).abs() <= tol {
            return Ok(lo);
        }
        return Err(PricingError::Numerical(format!(
            "price {price} lies below the value at the volatility floor {VOL_LOWER}"
        )));
    }
    while value(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > MAX_UPPER {
            return Err(PricingError::Numerical(format!("no volatility below {MAX_UPPER} reproduces price {price}")));
        }
    }

    let mut sigma = VOL_SEED.clamp(lo, hi);
    for _ in 0..MAX_ITER {
        let f = value(sigma);
        if f == 0.0 {
            return Ok(sigma);
        }
        if f > 0.0 {
            hi = sigma;
        } else {
            lo = sigma;
        }
        let vega = spot * normal::pdf(d1(x, k, sigma * sqrt_tau)) * sqrt_tau;
        let newton = sigma - f / vega;
        let next =
            if vega > 0.0 && newton.is_finite() && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        let step = (next - sigma).abs();
        sigma = next;
        if step <= 1e-15 * sigma.max(1.0) || hi - lo <= 1e-15 * hi {
            let residual = value(sigma).abs();
            if residual <= tol {
                return Ok(sigma);
            }
            return Err(PricingError::Numerical(format!(
                "implied vol stalled at {sigma} with price residual {residual:e} above {tol:e}"
            )));
        }
    }
    Err(PricingError::Numerical(format!("implied vol did not converge in {MAX_ITER} iterations")))
}

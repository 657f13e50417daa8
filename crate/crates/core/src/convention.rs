//! Log-linear strike conventions for exchange options.
//!
//! A convention picks the log strikes whose implied vols are fed into the
//! Margrabe formula:
//!
//! ```text
//! k_X = (1 - a) x + a y
//! k_Y = a x + (1 - a) y
//! ```
//!
//! `a = 0` uses each asset's own ATM vol, `a = 1` looks each vol up at the
//! other asset's spot. The first-order optimal coefficient `a*` matches the
//! moneyness slope of the exchange implied vol in the short-maturity limit;
//! it is available from model parameters ([`a_star_parametric`]) or from
//! measured smile levels and skews ([`a_star_observables`]).

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, PricingError, Result};
use crate::heston::SmileObservables;

/// Denominators below this magnitude make `a*` undefined.
pub const DEGENERATE_THRESHOLD: f64 = 1e-12;
/// Range used by the bounded convention.
pub const A_BOUNDS: (f64, f64) = (-1.0, 2.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearConvention {
    pub a: f64,
    pub bounded: bool,
}

impl LinearConvention {
    pub fn new(a: f64) -> Self {
        Self { a, bounded: false }
    }

    /// Convention with `a` clamped to [`A_BOUNDS`].
    pub fn bounded(a: f64) -> Self {
        Self { a: bound_a(a), bounded: true }
    }

    pub fn own_atm() -> Self {
        Self::new(0.0)
    }

    pub fn lookup() -> Self {
        Self::new(1.0)
    }
}

/// Model quantities that drive the parametric `a*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelLimits {
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub rho: f64,
    pub rho_x: f64,
    pub rho_y: f64,
}

impl ModelLimits {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_X", self.lambda_x), ("lambda_Y", self.lambda_y)] {
            ensure_finite(name, v)?;
            if v <= 0.0 {
                return Err(PricingError::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("rho", self.rho), ("rho_X", self.rho_x), ("rho_Y", self.rho_y)] {
            ensure_finite(name, v)?;
            if v.abs() > 1.0 {
                return Err(PricingError::InvalidInput(format!("{name} = {v} outside [-1, 1]")));
            }
        }
        Ok(())
    }

    /// Coefficient of `a` in the linear first-order condition.
    pub fn denominator(&self) -> f64 {
        self.rho_x * (self.lambda_x - self.rho * self.lambda_y)
            - self.rho_y * (self.lambda_y - self.rho * self.lambda_x)
    }

    /// Right-hand side of the linear first-order condition.
    pub fn numerator(&self) -> f64 {
        self.rho_x * self.lambda_x - self.rho_y * self.lambda_y
    }
}

/// Log strikes `(k_X, k_Y)` of a linear convention.
pub fn strikes(conv: &LinearConvention, x: f64, y: f64) -> (f64, f64) {
    // Written as offsets so both strikes equal the spots exactly when x == y.
    let a = conv.a;
    (x + a * (y - x), y + a * (x - y))
}

/// `a*` from model parameters.
pub fn a_star_parametric(limits: &ModelLimits) -> Result<f64> {
    limits.validate()?;
    let den = limits.denominator();
    if den.abs() < DEGENERATE_THRESHOLD {
        return Err(PricingError::DegenerateConvention(format!(
            "rho_X (lambda_X - rho lambda_Y) - rho_Y (lambda_Y - rho lambda_X) = {den:e}"
        )));
    }
    Ok(limits.numerator() / den)
}

/// `a*` from ATM levels `I_i` and skews `S_i`:
/// `(S_X I_X - S_Y I_Y) / (S_X (I_X - rho I_Y) - S_Y (I_Y - rho I_X))`.
pub fn a_star_observables(obs: &SmileObservables, rho: f64) -> Result<f64> {
    let (ix, iy, sx, sy) = (obs.atm_level_x, obs.atm_level_y, obs.atm_skew_x, obs.atm_skew_y);
    for (name, v) in [("I_X", ix), ("I_Y", iy), ("skew_X", sx), ("skew_Y", sy), ("rho", rho)] {
        ensure_finite(name, v)?;
    }
    if ix <= 0.0 || iy <= 0.0 {
        return Err(PricingError::InvalidInput(format!("ATM levels must be positive, got {ix}, {iy}")));
    }
    if rho.abs() > 1.0 {
        return Err(PricingError::InvalidInput(format!("correlation {rho} outside [-1, 1]")));
    }
    let den = sx * (ix - rho * iy) - sy * (iy - rho * ix);
    if den.abs() < DEGENERATE_THRESHOLD {
        return Err(PricingError::DegenerateConvention(format!(
            "observable denominator {den:e} below {DEGENERATE_THRESHOLD:e}"
        )));
    }
    Ok((sx * ix - sy * iy) / den)
}

/// Clamp `a` into [`A_BOUNDS`].
pub fn bound_a(a: f64) -> f64 {
    a.clamp(A_BOUNDS.0, A_BOUNDS.1)
}

/// Residual of the linear first-order condition; zero exactly at `a*`.
pub fn linear_stosc_residual(a: f64, limits: &ModelLimits) -> f64 {
    a * limits.denominator() - limits.numerator()
}

/// Short-time quantities of a general (not necessarily shared-volatility)
/// model and the strike-convention slopes at `x = y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralLimits {
    /// Spot volatilities `sigma_0^X`, `sigma_0^Y`.
    pub sigma0_x: f64,
    pub sigma0_y: f64,
    /// Limits of the Malliavin derivatives `D^+ sigma_0^X`, `D^+ sigma_0^Y`.
    pub dplus_x: f64,
    pub dplus_y: f64,
    pub rho: f64,
    pub rho_x: f64,
    pub rho_y: f64,
    /// `dk_X/dy` and `dk_Y/dy` at `x = y`.
    pub dkx_dy: f64,
    pub dky_dy: f64,
}

impl GeneralLimits {
    /// Limits implied by the shared-volatility model `sigma^i = lambda_i sigma`
    /// with CIR variance, where `D^+ sigma_0 = nu / 2`.
    pub fn shared_cir(limits: &ModelLimits, sigma0: f64, nu: f64, dkx_dy: f64, dky_dy: f64) -> Self {
        Self {
            sigma0_x: limits.lambda_x * sigma0,
            sigma0_y: limits.lambda_y * sigma0,
            dplus_x: limits.lambda_x * nu / 2.0,
            dplus_y: limits.lambda_y * nu / 2.0,
            rho: limits.rho,
            rho_x: limits.rho_x,
            rho_y: limits.rho_y,
            dkx_dy,
            dky_dy,
        }
    }

    /// Short-time exchange volatility.
    pub fn exchange_vol(&self) -> f64 {
        let (sx, sy) = (self.sigma0_x, self.sigma0_y);
        (sx * sx + sy * sy - 2.0 * self.rho * sx * sy).max(0.0).sqrt()
    }
}

/// Left minus right side of the general first-order condition.
///
/// Left: slope of the exchange implied vol,
/// `(rho_X s_X - rho_Y s_Y) / (2 s~^3) [D_X (s_X - rho s_Y) + D_Y (s_Y - rho s_X)]`.
/// Right: slope of the convention vol, evaluated with the limiting skews
/// `dI_i/dz = rho_i D_i / (2 s_i)`, levels `I_i = s_i` and `dI_Y/dy = -dI_Y/dz`.
pub fn general_residual(g: &GeneralLimits) -> Result<f64> {
    for (name, v) in [
        ("sigma0_X", g.sigma0_x),
        ("sigma0_Y", g.sigma0_y),
        ("D+sigma_X", g.dplus_x),
        ("D+sigma_Y", g.dplus_y),
        ("rho", g.rho),
        ("rho_X", g.rho_x),
        ("rho_Y", g.rho_y),
        ("dkX/dy", g.dkx_dy),
        ("dkY/dy", g.dky_dy),
    ] {
        ensure_finite(name, v)?;
    }
    if g.sigma0_x <= 0.0 || g.sigma0_y <= 0.0 {
        return Err(PricingError::InvalidInput("spot volatilities must be positive".into()));
    }
    let (sx, sy, rho) = (g.sigma0_x, g.sigma0_y, g.rho);
    let gamma = g.exchange_vol();
    if gamma <= 0.0 {
        return Err(PricingError::DegenerateModel("short-time exchange volatility is zero".into()));
    }
    let lhs = (g.rho_x * sx - g.rho_y * sy) / (2.0 * gamma.powi(3))
        * (g.dplus_x * (sx - rho * sy) + g.dplus_y * (sy - rho * sx));

    let skew_x = g.rho_x * g.dplus_x / (2.0 * sx);
    let skew_y = g.rho_y * g.dplus_y / (2.0 * sy);
    let spot_deriv_y = -skew_y;
    let y_term = skew_y * g.dky_dy + spot_deriv_y;
    let rhs = (sx * skew_x * g.dkx_dy + sy * y_term - rho * sx * y_term - rho * sy * skew_x * g.dkx_dy) / gamma;
    Ok(lhs - rhs)
}

//! Heston vanilla pricing for each leg of the shared-volatility model,
//! implied-volatility smiles and ATM level/skew measurement.
//!
//! Both assets load on one CIR variance `v_t = sigma_t^2` through constant
//! scalings `lambda_i`. The leg variance `lambda_i^2 v_t` is again CIR, so each
//! leg is priced by a one-asset Heston pricer under [`effective_heston`].
//!
//! Calls are priced with the Lewis contour integral
//! `C = S - sqrt(S K) / pi * int_0^inf Re[e^{-iuk} phi(u - i/2)] / (u^2 + 1/4) du`,
//! `phi` being the characteristic function of `ln(S_T / S_0)` in the
//! "little trap" form, which stays on the principal branch of the complex
//! logarithm for long maturities.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blackscholes;
use crate::error::{ensure_finite, PricingError, Result};
use crate::quadrature;

/// Default log-strike step for the central-difference ATM skew.
pub const DEFAULT_SKEW_STEP: f64 = 0.01;

/// Tail bound on the truncated Lewis integral.
const TAIL_TOL: f64 = 1e-14;
const PANEL_TOL: f64 = 1e-15;
const MAX_FREQUENCY: f64 = 1e7;

/// CIR variance parameters: `dv = kappa (theta - v) dt + nu sqrt(v) dZ`,
/// `v_0 = sigma0^2`. The Feller condition is not required.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonParams {
    pub kappa: f64,
    pub theta: f64,
    pub nu: f64,
    pub sigma0: f64,
}

impl HestonParams {
    pub fn new(kappa: f64, theta: f64, nu: f64, sigma0: f64) -> Result<Self> {
        let p = Self { kappa, theta, nu, sigma0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kappa", self.kappa), ("theta", self.theta), ("nu", self.nu), ("sigma0", self.sigma0)] {
            ensure_finite(name, v)?;
            if v <= 0.0 {
                return Err(PricingError::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn v0(&self) -> f64 {
        self.sigma0 * self.sigma0
    }
}

/// One leg of the two-asset model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssetSpec {
    /// Volatility scaling `lambda_i`.
    pub lambda: f64,
    /// Correlation between the asset and the variance driver.
    pub rho_sv: f64,
    /// Spot price.
    pub s0: f64,
}

impl AssetSpec {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("lambda", self.lambda)?;
        ensure_finite("rho_sv", self.rho_sv)?;
        ensure_finite("s0", self.s0)?;
        if self.lambda <= 0.0 {
            return Err(PricingError::InvalidInput(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.rho_sv.abs() > 1.0 {
            return Err(PricingError::InvalidInput(format!("rho_sv {} outside [-1, 1]", self.rho_sv)));
        }
        if self.s0 <= 0.0 {
            return Err(PricingError::InvalidInput(format!("spot must be positive, got {}", self.s0)));
        }
        Ok(())
    }
}

/// ATM implied-volatility levels and skews (per unit log strike).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmileObservables {
    pub atm_level_x: f64,
    pub atm_level_y: f64,
    pub atm_skew_x: f64,
    pub atm_skew_y: f64,
    pub maturity: f64,
}

/// Heston parameters of the scaled leg `lambda^2 v_t`.
pub fn effective_heston(model: &HestonParams, asset: &AssetSpec) -> HestonParams {
    let l = asset.lambda;
    HestonParams { kappa: model.kappa, theta: l * l * model.theta, nu: l * model.nu, sigma0: l * model.sigma0 }
}

/// `ln(1 + z)` without cancellation for small `|z|`.
fn complex_ln_1p(z: Complex64) -> Complex64 {
    let re = 0.5 * (2.0 * z.re + z.norm_sqr()).ln_1p();
    let im = z.im.atan2(1.0 + z.re);
    Complex64::new(re, im)
}

/// Characteristic function `E[exp(i w ln(S_T / S_0))]` at complex `w`.
///
/// Written so that `(beta - d) / nu^2` and `g / nu^2` never divide by
/// `nu^2` explicitly, which keeps the degenerate `nu -> 0` limit finite.
pub fn characteristic_function(p: &HestonParams, rho: f64, maturity: f64, w: Complex64) -> Complex64 {
    let i = Complex64::i();
    let nu2 = p.nu * p.nu;
    let q = i * w + w * w;
    let beta = Complex64::new(p.kappa, 0.0) - i * (rho * p.nu) * w;
    let d = (beta * beta + q * nu2).sqrt();
    let d = if d.re < 0.0 { -d } else { d };
    let sum = beta + d;
    // beta - d = -nu^2 q / (beta + d)
    let diff_over_nu2 = -q / sum;
    let g_over_nu2 = diff_over_nu2 / sum;
    let g = g_over_nu2 * nu2;
    let e = (-d * maturity).exp();
    let one = Complex64::new(1.0, 0.0);

    let log_ratio_over_nu2 = if g.norm() < 1e-6 {
        g_over_nu2 * (one - e) + g_over_nu2 * g * (one - e * e) * 0.5
    } else {
        (complex_ln_1p(-g * e) - complex_ln_1p(-g)) / nu2
    };
    let c = p.kappa * p.theta * (diff_over_nu2 * maturity - log_ratio_over_nu2 * 2.0);
    let dd = diff_over_nu2 * (one - e) / (one - g * e);
    (c + dd * p.v0()).exp()
}

/// European call under Heston with zero rates.
///
/// `params` are the (effective) leg parameters and `rho_sv` the leverage.
pub fn heston_vanilla_price(params: &HestonParams, rho_sv: f64, s0: f64, strike: f64, maturity: f64) -> Result<f64> {
    let otm = heston_otm_price(params, rho_sv, s0, strike, maturity)?;
    Ok(if strike >= s0 { otm } else { otm + s0 - strike })
}

/// Out-of-the-money value under Heston: the call when `strike >= s0`, the
/// put otherwise.
///
/// Uses the Lewis integral, switching to a damped Fourier representation of
/// the wing option when the value is too small for the Lewis form's
/// absolute accuracy.
pub fn heston_otm_price(params: &HestonParams, rho_sv: f64, s0: f64, strike: f64, maturity: f64) -> Result<f64> {
    params.validate()?;
    for (name, v) in [("rho_sv", rho_sv), ("s0", s0), ("strike", strike), ("maturity", maturity)] {
        ensure_finite(name, v)?;
    }
    if rho_sv.abs() > 1.0 {
        return Err(PricingError::InvalidInput(format!("rho_sv {rho_sv} outside [-1, 1]")));
    }
    if s0 <= 0.0 || strike < 0.0 || maturity < 0.0 {
        return Err(PricingError::InvalidInput(format!(
            "need s0 > 0, strike >= 0, maturity >= 0; got {s0}, {strike}, {maturity}"
        )));
    }
    if strike == 0.0 || maturity == 0.0 {
        return Ok(0.0);
    }
    let k = (strike / s0).ln();
    let call = lewis_call(params, rho_sv, s0, strike, k, maturity)?;
    let otm = if k >= 0.0 { call } else { call - s0 + strike };
    if otm > DAMPED_SWITCH * s0 {
        return Ok(otm);
    }
    damped_otm(params, rho_sv, s0, k, maturity)
}

/// Below this fraction of spot the Lewis value is replaced by the damped one.
const DAMPED_SWITCH: f64 = 1e-6;
/// Absolute resolution of the damped value, as a fraction of spot.
const DAMPED_FLOOR: f64 = 1e-16;

fn lewis_call(params: &HestonParams, rho_sv: f64, s0: f64, strike: f64, k: f64, maturity: f64) -> Result<f64> {
    let integrand = |u: f64| {
        let phi = characteristic_function(params, rho_sv, maturity, Complex64::new(u, -0.5));
        let osc = Complex64::new(0.0, -u * k).exp();
        (osc * phi).re / (u * u + 0.25)
    };
    let envelope = |u: f64| characteristic_function(params, rho_sv, maturity, Complex64::new(u, -0.5)).norm() / u;
    let total = panels(&integrand, &envelope, PANEL_TOL, TAIL_TOL, maturity, strike)?;
    let price = s0 - (s0 * strike).sqrt() / std::f64::consts::PI * total;
    if !price.is_finite() {
        return Err(PricingError::Numerical(format!("non-finite Heston price for K = {strike}, T = {maturity}")));
    }
    Ok(price)
}

/// `int_0^inf f` over geometrically widening panels, stopping once the
/// envelope of the integrand falls below `tail`.
fn panels<F: Fn(f64) -> f64, E: Fn(f64) -> f64>(
    f: &F,
    envelope: &E,
    panel_tol: f64,
    tail: f64,
    maturity: f64,
    strike: f64,
) -> Result<f64> {
    let mut total = 0.0;
    let mut a = 0.0;
    let mut width = 1.0;
    loop {
        let b = a + width;
        total += quadrature::adaptive(f, a, b, panel_tol)?;
        if envelope(b) < tail && envelope(0.5 * (a + b)) < tail * 1e3 {
            return Ok(total);
        }
        a = b;
        width *= 1.5;
        if a > MAX_FREQUENCY {
            return Err(PricingError::Numerical(format!(
                "Heston integrand still {:e} at u = {a:e} (T = {maturity}, K = {strike})",
                envelope(a)
            )));
        }
    }
}

/// `E[(S_T / S_0)^u]` when it is finite and the closed form stays on the
/// real branch; `None` otherwise.
fn real_moment(p: &HestonParams, rho: f64, maturity: f64, u: f64) -> Option<f64> {
    let m = characteristic_function(p, rho, maturity, Complex64::new(0.0, -u));
    (m.re.is_finite() && m.re > 0.0 && m.im.abs() <= 1e-10 * m.re).then_some(m.re)
}

/// Damped wing value `s0 e^{-alpha k} / pi int_0^inf Re[e^{-iuk} psi(u)] du`
/// with `psi(u) = phi(u - (alpha + 1) i) / (alpha^2 + alpha - u^2 + i (2 alpha + 1) u)`.
/// `alpha > 0` gives the call, `alpha < -1` the put.
///
/// The damping is picked from a ladder by the size of `psi(0) e^{-alpha k}`,
/// restricted to moments that stay finite up to twice the maturity, and the
/// value is confirmed with the runner-up.
fn damped_otm(p: &HestonParams, rho: f64, s0: f64, k: f64, maturity: f64) -> Result<f64> {
    let ladder: [f64; 9] = if k >= 0.0 {
        [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0]
    } else {
        [-1.5, -2.0, -3.0, -5.0, -9.0, -17.0, -33.0, -65.0, -129.0]
    };
    let mut scored: Vec<(f64, f64, f64)> = ladder
        .iter()
        .filter_map(|&alpha| {
            let u = alpha + 1.0;
            let m = real_moment(p, rho, maturity, u)?;
            real_moment(p, rho, 2.0 * maturity, u)?;
            let psi0 = m / (alpha * (alpha + 1.0)).abs();
            Some(((psi0).ln() - alpha * k, alpha, psi0))
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    if scored.len() < 2 {
        return Err(PricingError::Numerical(format!(
            "no admissible damping for the wing at log-moneyness {k} (T = {maturity})"
        )));
    }
    let value = |alpha: f64, psi0: f64| -> Result<f64> {
        let i = Complex64::i();
        let psi = |u: f64| {
            let w = Complex64::new(u, -(alpha + 1.0));
            let den = Complex64::new(alpha * alpha + alpha - u * u, (2.0 * alpha + 1.0) * u);
            characteristic_function(p, rho, maturity, w) / den
        };
        let integrand = |u: f64| ((-i * u * k).exp() * psi(u)).re;
        let envelope = |u: f64| psi(u).norm() * u;
        let total = panels(&integrand, &envelope, 1e-15 * psi0, 1e-15 * psi0, maturity, s0 * k.exp())?;
        Ok(s0 * (-alpha * k).exp() / std::f64::consts::PI * total)
    };
    let (_, a1, m1) = scored[0];
    let (_, a2, m2) = scored[1];
    let v1 = value(a1, m1)?;
    let v2 = value(a2, m2)?;
    // Values below the absolute floor are indistinguishable from zero.
    if !(v1 > 0.0 || v1.abs() <= DAMPED_FLOOR * s0) || (v1 - v2).abs() > 1e-6 * v1.abs() + DAMPED_FLOOR * s0 {
        return Err(PricingError::Numerical(format!(
            "wing value at log-moneyness {k} unresolved: {v1:e} (alpha {a1}) vs {v2:e} (alpha {a2})"
        )));
    }
    Ok(v1.max(0.0))
}

/// Price of a call on leg `asset` of the shared-volatility model.
pub fn leg_vanilla_price(model: &HestonParams, asset: &AssetSpec, strike: f64, maturity: f64) -> Result<f64> {
    asset.validate()?;
    heston_vanilla_price(&effective_heston(model, asset), asset.rho_sv, asset.s0, strike, maturity)
}

/// Implied volatility of a leg at log-moneyness `m = ln(K / S0)`.
pub fn leg_implied_vol(model: &HestonParams, asset: &AssetSpec, moneyness: f64, maturity: f64) -> Result<f64> {
    let strike = asset.s0 * moneyness.exp();
    asset.validate()?;
    let price = heston_otm_price(&effective_heston(model, asset), asset.rho_sv, asset.s0, strike, maturity)?;
    blackscholes::implied_vol_otm(price, 0.0, maturity, asset.s0.ln(), strike.ln())
}

/// One quoted smile point. Failed points keep their error.
#[derive(Debug, Clone, PartialEq)]
pub struct SmilePoint {
    pub log_strike: f64,
    pub strike: f64,
    pub implied_vol: Result<f64>,
}

/// Implied-volatility smile of one leg at one maturity.
#[derive(Debug, Clone, PartialEq)]
pub struct Smile {
    pub maturity: f64,
    pub spot: f64,
    pub points: Vec<SmilePoint>,
    interp: MonotoneCubic,
}

impl Smile {
    pub fn from_points(maturity: f64, spot: f64, mut points: Vec<SmilePoint>) -> Result<Self> {
        points.sort_by(|a, b| a.log_strike.total_cmp(&b.log_strike));
        let ln_s = spot.ln();
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            points.iter().filter_map(|p| p.implied_vol.as_ref().ok().map(|v| (p.log_strike - ln_s, *v))).unzip();
        if xs.is_empty() {
            return Err(PricingError::Numerical("smile has no valid points".into()));
        }
        Ok(Self { maturity, spot, points, interp: MonotoneCubic::new(xs, ys) })
    }

    /// Number of points whose pricing or inversion failed.
    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| p.implied_vol.is_err()).count()
    }

    /// Implied vol at log-moneyness `ln(K / S0)`; monotone cubic inside the
    /// quoted range, flat outside.
    pub fn vol_at_moneyness(&self, moneyness: f64) -> f64 {
        self.interp.eval(moneyness)
    }

    /// Implied vol at log strike `k` for a spot with log price `x`.
    ///
    /// The model is scale invariant so only `k - x` matters.
    pub fn vol_at(&self, x: f64, k: f64) -> f64 {
        self.vol_at_moneyness(k - x)
    }
}

/// Prices each strike, inverts it and returns the smile sorted by strike.
pub fn build_smile(model: &HestonParams, asset: &AssetSpec, maturity: f64, log_strikes: &[f64]) -> Result<Smile> {
    model.validate()?;
    asset.validate()?;
    let lo = (0.6 * asset.s0).ln() - 1e-12;
    let hi = (1.4 * asset.s0).ln() + 1e-12;
    if let Some(k) = log_strikes.iter().find(|k| !(lo..=hi).contains(*k)) {
        return Err(PricingError::InvalidInput(format!("log strike {k} outside [ln 0.6 S0, ln 1.4 S0]")));
    }
    let ln_s = asset.s0.ln();
    let points = log_strikes
        .par_iter()
        .map(|&k| SmilePoint {
            log_strike: k,
            strike: k.exp(),
            implied_vol: leg_implied_vol(model, asset, k - ln_s, maturity),
        })
        .collect();
    Smile::from_points(maturity, asset.s0, points)
}

/// `n` log strikes evenly spaced in log-moneyness over `[ln lo, ln hi]`.
pub fn log_strike_grid(s0: f64, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let ln_s = s0.ln();
    if n == 1 {
        return vec![ln_s + 0.5 * (a + b)];
    }
    (0..n).map(|i| ln_s + a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Smile grid used by the experiments: 41 strikes over `[ln 0.7, ln 1.3]`.
pub fn default_smile(model: &HestonParams, asset: &AssetSpec, maturity: f64) -> Result<Smile> {
    build_smile(model, asset, maturity, &log_strike_grid(asset.s0, 0.7, 1.3, 41))
}

/// ATM level and central-difference skew of one leg.
pub fn atm_level_and_skew(model: &HestonParams, asset: &AssetSpec, maturity: f64, step: f64) -> Result<(f64, f64)> {
    if !(step > 0.0) {
        return Err(PricingError::InvalidInput(format!("skew step must be positive, got {step}")));
    }
    let level = leg_implied_vol(model, asset, 0.0, maturity)?;
    let up = leg_implied_vol(model, asset, step, maturity)?;
    let down = leg_implied_vol(model, asset, -step, maturity)?;
    Ok((level, (up - down) / (2.0 * step)))
}

/// ATM implied-vol levels and skews of both legs at `maturity`.
pub fn measure_atm_observables(
    model: &HestonParams,
    asset_x: &AssetSpec,
    asset_y: &AssetSpec,
    maturity: f64,
    step: f64,
) -> Result<SmileObservables> {
    model.validate()?;
    asset_x.validate()?;
    asset_y.validate()?;
    let (atm_level_x, atm_skew_x) = atm_level_and_skew(model, asset_x, maturity, step)?;
    let (atm_level_y, atm_skew_y) = atm_level_and_skew(model, asset_y, maturity, step)?;
    Ok(SmileObservables { atm_level_x, atm_level_y, atm_skew_x, atm_skew_y, maturity })
}

/// Writes smiles as CSV with columns `asset,T,log_strike,strike,implied_vol`.
/// Failed points are written with an empty implied vol.
pub fn write_smile_csv<W: std::io::Write>(out: W, smiles: &[(&str, &Smile)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| PricingError::Numerical(format!("csv write failed: {e}"));
    w.write_record(["asset", "T", "log_strike", "strike", "implied_vol"]).map_err(io)?;
    for (name, smile) in smiles {
        for p in &smile.points {
            let iv = p.implied_vol.as_ref().map(|v| v.to_string()).unwrap_or_default();
            w.write_record([
                name.to_string(),
                smile.maturity.to_string(),
                p.log_strike.to_string(),
                p.strike.to_string(),
                iv,
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| PricingError::Numerical(format!("csv flush failed: {e}")))?;
    Ok(())
}

/// Fritsch-Carlson monotone cubic Hermite interpolant with flat
/// extrapolation.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    /// `xs` must be strictly increasing.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        let n = xs.len();
        let mut slopes = vec![0.0; n];
        if n >= 2 {
            let secants: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])).collect();
            slopes[0] = secants[0];
            slopes[n - 1] = secants[n - 2];
            for i in 1..n - 1 {
                slopes[i] = if secants[i - 1] * secants[i] <= 0.0 { 0.0 } else { 0.5 * (secants[i - 1] + secants[i]) };
            }
            for i in 0..n - 1 {
                if secants[i] == 0.0 {
                    slopes[i] = 0.0;
                    slopes[i + 1] = 0.0;
                    continue;
                }
                let a = slopes[i] / secants[i];
                let b = slopes[i + 1] / secants[i];
                let r = a * a + b * b;
                if r > 9.0 {
                    let t = 3.0 / r.sqrt();
                    slopes[i] = t * a * secants[i];
                    slopes[i + 1] = t * b * secants[i];
                }
            }
        }
        Self { xs, ys, slopes }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = self.xs.partition_point(|&v| v <= x) - 1;
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.slopes[i] + h01 * self.ys[i + 1] + h11 * h * self.slopes[i + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blackscholes::{bs_price, VanillaSpec};

    pub(crate) fn base_model() -> HestonParams {
        HestonParams::new(1.5, 0.15, 0.5, 0.15).unwrap()
    }

    fn asset(lambda: f64, rho_sv: f64) -> AssetSpec {
        AssetSpec { lambda, rho_sv, s0: 100.0 }
    }

    #[test]
    fn effective_params() {
        let m = base_model();
        assert_eq!(effective_heston(&m, &asset(1.0, 0.0)), m);
        let e = effective_heston(&m, &asset(1.5, 0.0));
        assert!((e.theta - 0.3375).abs() < 1e-15);
        assert!((e.nu - 0.75).abs() < 1e-15);
        assert!((e.sigma0 - 0.225).abs() < 1e-15);
        assert_eq!(e.kappa, 1.5);
    }

    #[test]
    fn rejects_non_positive_params() {
        assert!(HestonParams::new(1.5, 0.15, 0.0, 0.15).is_err());
        assert!(HestonParams::new(-1.0, 0.15, 0.5, 0.15).is_err());
        // Feller violation is allowed.
        assert!(HestonParams::new(0.1, 0.01, 2.0, 0.1).is_ok());
    }

    #[test]
    fn characteristic_function_normalised() {
        let m = base_model();
        for t in [0.005, 0.05, 1.0, 5.0] {
            let at_zero = characteristic_function(&m, -0.4, t, Complex64::new(0.0, 0.0));
            assert!((at_zero - 1.0).norm() < 1e-14);
            // Martingale: E[S_T / S_0] = 1.
            let at_minus_i = characteristic_function(&m, -0.4, t, Complex64::new(0.0, -1.0));
            assert!((at_minus_i - 1.0).norm() < 1e-13, "{at_minus_i}");
        }
    }

    // Reference prices from an independent double-precision implementation
    // (scipy adaptive quadrature on the same contour, panels to u = 3000).
    #[test]
    fn test_case_reference_prices() {
        let m = base_model();
        let cases = [
            (1.5, -0.4, 100.0, 2.165_652_419_567_024_4),
            (1.0, -0.6, 100.0, 1.444_482_698_936_312_2),
            (1.0, 0.4, 100.0, 1.448_026_825_711_323_8),
            (1.5, -0.4, 120.0, 3.779_869_368_258_914_6e-4),
            (1.0, 0.4, 120.0, 1.459_551_995_708_352_5e-4),
            (1.5, -0.4, 80.0, 20.001_352_828_065_65),
        ];
        for (lambda, rho, strike, expected) in cases {
            let p = leg_vanilla_price(&m, &asset(lambda, rho), strike, 0.05).unwrap();
            assert!((p - expected).abs() < 1e-6, "lambda {lambda} rho {rho} K {strike}: {p} vs {expected}");
            assert!((p - expected).abs() < 1e-9, "tight: {p} vs {expected}");
        }
    }

    #[test]
    fn degenerate_heston_is_black_scholes() {
        // nu -> 0 with theta = sigma0^2 freezes the variance.
        let m = HestonParams::new(5.0, 0.04, 1e-10, 0.2).unwrap();
        for strike in [70.0, 95.0, 100.0, 130.0] {
            for t in [0.05, 1.0] {
                let h = heston_vanilla_price(&m, -0.5, 100.0, strike, t).unwrap();
                let b = bs_price(&VanillaSpec::new(0.0, t, 100f64.ln(), strike.ln(), 0.2)).unwrap();
                assert!((h - b).abs() < 1e-8, "K {strike} T {t}: {h} vs {b}");
            }
        }
    }

    #[test]
    fn zero_strike_is_spot() {
        let m = base_model();
        assert_eq!(heston_vanilla_price(&m, 0.3, 100.0, 0.0, 0.5).unwrap(), 100.0);
        let tiny = heston_vanilla_price(&m, 0.3, 100.0, 1e-6, 0.5).unwrap();
        assert!((tiny - 100.0).abs() < 1e-5);
    }

    #[test]
    fn long_maturity_stays_arbitrage_free() {
        let m = base_model();
        for t in [1.0, 5.0, 10.0] {
            let mut prev = f64::INFINITY;
            for strike in [50.0, 80.0, 100.0, 120.0, 200.0] {
                let p = leg_vanilla_price(&m, &asset(1.24, -0.61), strike, t).unwrap();
                assert!(p < prev && p > (100.0 - strike).max(0.0));
                prev = p;
            }
        }
    }

    #[test]
    fn flat_smile_for_degenerate_model() {
        let m = HestonParams::new(5.0, 0.0225, 1e-7, 0.15).unwrap();
        let a = asset(1.5, -0.4);
        let smile = default_smile(&m, &a, 0.25).unwrap();
        assert_eq!(smile.failures(), 0);
        for p in &smile.points {
            assert!((p.implied_vol.as_ref().unwrap() - 0.225).abs() < 1e-7);
        }
        let (_, skew) = atm_level_and_skew(&m, &a, 0.25, DEFAULT_SKEW_STEP).unwrap();
        assert!(skew.abs() < 1e-5);
    }

    #[test]
    fn skew_signs_follow_leverage() {
        let m = base_model();
        let down = build_smile(&m, &asset(1.5, -0.4), 0.05, &log_strike_grid(100.0, 0.9, 1.1, 9)).unwrap();
        let vols: Vec<f64> = down.points.iter().map(|p| *p.implied_vol.as_ref().unwrap()).collect();
        assert!(vols[3] > vols[5]);
        let (_, skew_y) = atm_level_and_skew(&m, &asset(1.0, 0.4), 0.05, DEFAULT_SKEW_STEP).unwrap();
        assert!(skew_y > 0.0);
    }

    #[test]
    fn deep_wings_match_high_precision_reference() {
        // 30-digit quadrature of the damped representation, two dampings agreeing.
        let m = base_model();
        let cases = [
            (1.24, -0.72, 125.0, 1.254_052_912_144_336_3e-10),
            (1.0, -0.72, 125.0, 1.876_125_313e-14),
            (1.24, 0.29, 125.0, 1.366_157_777_155_71e-4),
            (1.24, -0.72, 80.0, 4.679_424_892_647_82e-4),
            (1.24, 0.29, 80.0, 2.054_576_588_269_27e-6),
        ];
        for (lambda, rho, strike, expected) in cases {
            let a = asset(lambda, rho);
            let p = heston_otm_price(&effective_heston(&m, &a), rho, 100.0, strike, 0.05).unwrap();
            assert!((p / expected - 1.0).abs() < 1e-7, "lambda {lambda} rho {rho} K {strike}: {p:e} vs {expected:e}");
        }
    }

    #[test]
    fn grid_skew_strikes_invert() {
        let m = base_model();
        let step = 1.25f64.ln();
        for t in [0.05, 0.1, 0.25, 0.5, 1.0] {
            for (lambda, rhos) in [(1.0, [-0.72, -0.42, -0.12, 0.18, 0.48]), (1.24, [-0.61, -0.31, -0.01, 0.29, 0.59])]
            {
                for rho in rhos {
                    let (level, skew) = atm_level_and_skew(&m, &asset(lambda, rho), t, step).unwrap();
                    assert!(
                        level > 0.0 && skew.is_finite() && skew.signum() == rho.signum(),
                        "T {t} lambda {lambda} rho {rho}: {skew}"
                    );
                }
            }
        }
    }

    #[test]
    fn short_maturity_limits() {
        let m = base_model();
        let (x, y) = (asset(1.5, -0.4), asset(1.0, -0.6));
        let obs = measure_atm_observables(&m, &x, &y, 0.005, DEFAULT_SKEW_STEP).unwrap();
        assert!((obs.atm_level_x - 1.5 * 0.15).abs() < 0.01, "{obs:?}");
        assert!((obs.atm_level_y - 0.15).abs() < 0.01, "{obs:?}");
        let limit = |rho: f64| rho * 0.5 / (4.0 * 0.15);
        assert!((obs.atm_skew_x / limit(-0.4) - 1.0).abs() < 0.15, "{obs:?}");
        assert!((obs.atm_skew_y / limit(-0.6) - 1.0).abs() < 0.15, "{obs:?}");
        let ratio = obs.atm_skew_y / obs.atm_skew_x;
        assert!((ratio / 1.5 - 1.0).abs() < 0.10, "{ratio}");
    }

    #[test]
    fn smile_reprices_heston() {
        let m = base_model();
        let a = asset(1.24, 0.29);
        let smile = build_smile(&m, &a, 0.25, &log_strike_grid(100.0, 0.8, 1.2, 5)).unwrap();
        for p in &smile.points {
            let iv = *p.implied_vol.as_ref().unwrap();
            let bs = bs_price(&VanillaSpec::new(0.0, 0.25, 100f64.ln(), p.log_strike, iv)).unwrap();
            let h = leg_vanilla_price(&m, &a, p.strike, 0.25).unwrap();
            assert!((bs - h).abs() <= 1e-10);
            // Interpolant passes through the nodes.
            assert!((smile.vol_at(100f64.ln(), p.log_strike) - iv).abs() < 1e-14);
        }
    }

    #[test]
    fn smile_rejects_out_of_span_strikes() {
        let m = base_model();
        let err = build_smile(&m, &asset(1.0, 0.0), 0.1, &[50f64.ln()]).unwrap_err();
        assert!(matches!(err, PricingError::InvalidInput(_)));
    }

    #[test]
    fn interpolation_is_monotone_and_flat_outside() {
        let xs = vec![-0.3, -0.1, 0.0, 0.1, 0.3];
        let ys = vec![0.4, 0.3, 0.25, 0.24, 0.24];
        let f = MonotoneCubic::new(xs, ys);
        let mut prev = f.eval(-0.3);
        for i in 1..=600 {
            let v = f.eval(-0.3 + i as f64 * 0.001);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
        assert_eq!(f.eval(-2.0), 0.4);
        assert_eq!(f.eval(2.0), 0.24);
    }

    #[test]
    fn smile_csv_header_and_rows() {
        let m = base_model();
        let smile = build_smile(&m, &asset(1.0, 0.4), 0.05, &log_strike_grid(100.0, 0.95, 1.05, 3)).unwrap();
        let mut buf = Vec::new();
        write_smile_csv(&mut buf, &[("Y", &smile)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "asset,T,log_strike,strike,implied_vol");
        assert_eq!(lines.count(), 3);
    }
}

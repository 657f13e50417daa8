//! Monte Carlo for the shared-volatility two-asset model.
//!
//! Three correlated drivers `(W^X, W^Y, Z)` are generated from independent
//! normals through [`cholesky3`] in that fixed order. The variance follows a
//! full-truncation Euler scheme and each log price a log-Euler step driven
//! by the truncated variance of the step.
//!
//! Every path draws from its own ChaCha8 stream `(seed, path_index)` and
//! paths are produced in fixed-size chunks gathered in index order, so
//! results do not depend on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blackscholes::{self, VanillaSpec};
use crate::error::{ensure_finite, PricingError, Result};
use crate::heston::{AssetSpec, HestonParams};
use crate::margrabe;

const CHUNK: usize = 2048;
const PIVOT_TOL: f64 = 1e-12;

/// Pairwise correlations of `(W^X, W^Y, Z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationStructure {
    /// `<W^X, W^Y>`
    pub rho: f64,
    /// `<W^X, Z>`
    pub rho_x: f64,
    /// `<W^Y, Z>`
    pub rho_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationCheck {
    pub valid: bool,
    pub determinant: f64,
}

impl CorrelationStructure {
    pub fn new(rho: f64, rho_x: f64, rho_y: f64) -> Self {
        Self { rho, rho_x, rho_y }
    }

    pub fn determinant(&self) -> f64 {
        let (r, a, b) = (self.rho, self.rho_x, self.rho_y);
        1.0 + 2.0 * r * a * b - r * r - a * a - b * b
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        [[1.0, self.rho, self.rho_x], [self.rho, 1.0, self.rho_y], [self.rho_x, self.rho_y, 1.0]]
    }
}

/// Positive semi-definiteness test of the 3x3 correlation matrix.
pub fn validate_correlation(c: &CorrelationStructure) -> CorrelationCheck {
    let determinant = c.determinant();
    let entries_ok = [c.rho, c.rho_x, c.rho_y].iter().all(|v| v.is_finite() && v.abs() <= 1.0);
    // 2x2 principal minors 1 - r^2.
    let minors_ok = [c.rho, c.rho_x, c.rho_y].iter().all(|v| 1.0 - v * v >= 0.0);
    CorrelationCheck { valid: entries_ok && minors_ok && determinant >= 0.0, determinant }
}

/// Lower-triangular factor `L` with `L L^T` equal to the correlation matrix.
/// Pivots below `1e-12` are treated as zero (rank-deficient but PSD input).
pub fn cholesky3(c: &CorrelationStructure) -> Result<[[f64; 3]; 3]> {
    let check = validate_correlation(c);
    // Singular matrices may round to a tiny negative determinant.
    if check.determinant < -PIVOT_TOL {
        return Err(PricingError::Domain(format!(
            "correlation matrix not positive semi-definite (det = {:e})",
            check.determinant
        )));
    }
    let m = c.matrix();
    let mut l = [[0.0; 3]; 3];
    for j in 0..3 {
        let mut diag = m[j][j];
        for k in 0..j {
            diag -= l[j][k] * l[j][k];
        }
        if diag < -PIVOT_TOL {
            return Err(PricingError::Domain(format!("negative pivot {diag:e} in column {j}")));
        }
        let pivot = if diag <= PIVOT_TOL { 0.0 } else { diag.sqrt() };
        l[j][j] = pivot;
        for i in j + 1..3 {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = if pivot == 0.0 { 0.0 } else { s / pivot };
        }
    }
    Ok(l)
}

/// Shared-volatility two-asset model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoAssetModel {
    pub heston: HestonParams,
    pub asset_x: AssetSpec,
    pub asset_y: AssetSpec,
    /// `<W^X, W^Y>`
    pub rho: f64,
}

impl TwoAssetModel {
    pub fn correlation(&self) -> CorrelationStructure {
        CorrelationStructure::new(self.rho, self.asset_x.rho_sv, self.asset_y.rho_sv)
    }

    /// Exchange volatility at time zero, `sigma0 sqrt(lx^2 + ly^2 - 2 rho lx ly)`.
    pub fn exchange_vol0(&self) -> f64 {
        let (lx, ly) = (self.asset_x.lambda, self.asset_y.lambda);
        self.heston.sigma0 * (lx * lx + ly * ly - 2.0 * self.rho * lx * ly).max(0.0).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        self.heston.validate()?;
        self.asset_x.validate()?;
        self.asset_y.validate()?;
        ensure_finite("rho", self.rho)?;
        if self.rho.abs() > 1.0 {
            return Err(PricingError::InvalidInput(format!("rho {} outside [-1, 1]", self.rho)));
        }
        Ok(())
    }

    pub fn asset(&self, id: AssetId) -> &AssetSpec {
        match id {
            AssetId::X => &self.asset_x,
            AssetId::Y => &self.asset_y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AssetId {
    X,
    Y,
}

/// Control-variate coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Beta {
    /// Sample regression coefficient `cov(payoff, cv) / var(cv)`.
    Estimated,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    /// Time steps per year; a maturity `T` uses `ceil(steps_per_year T)`.
    pub steps_per_year: usize,
    pub seed: u64,
    pub use_control_variate: bool,
    pub beta: Beta,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { n_paths: 100_000, steps_per_year: 250, seed: 42, use_control_variate: true, beta: Beta::Estimated }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 || self.steps_per_year == 0 {
            return Err(PricingError::InvalidInput("n_paths and steps_per_year must be at least 1".into()));
        }
        if let Beta::Fixed(b) = self.beta {
            ensure_finite("beta", b)?;
        }
        Ok(())
    }

    pub fn n_steps(&self, maturity: f64) -> usize {
        ((self.steps_per_year as f64 * maturity - 1e-9).ceil() as usize).max(1)
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub n_steps: usize,
    /// Control-variate coefficient used, 0 without control variate.
    pub beta: f64,
}

/// Terminal log returns `ln(S_T / S_0)` of one path, for the stochastic
/// volatility legs and for the constant-volatility control legs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEnd {
    pub log_x: f64,
    pub log_y: f64,
    pub cv_log_x: f64,
    pub cv_log_y: f64,
}

fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

struct Stepper {
    chol: [[f64; 3]; 3],
    dt: f64,
    sqrt_dt: f64,
    n_steps: usize,
    kappa: f64,
    theta: f64,
    nu: f64,
    v0: f64,
    lx2: f64,
    ly2: f64,
    lx: f64,
    ly: f64,
}

impl Stepper {
    fn new(model: &TwoAssetModel, maturity: f64, n_steps: usize) -> Result<Self> {
        let chol = cholesky3(&model.correlation())?;
        let dt = maturity / n_steps as f64;
        let h = &model.heston;
        let (lx, ly) = (model.asset_x.lambda, model.asset_y.lambda);
        Ok(Self {
            chol,
            dt,
            sqrt_dt: dt.sqrt(),
            n_steps,
            kappa: h.kappa,
            theta: h.theta,
            nu: h.nu,
            v0: h.v0(),
            lx2: lx * lx,
            ly2: ly * ly,
            lx,
            ly,
        })
    }

    /// Runs one path, calling `observe(step, truncated_variance)` before each step.
    fn run<F: FnMut(usize, f64)>(&self, rng: &mut ChaCha8Rng, mut observe: F) -> std::result::Result<PathEnd, String> {
        let l = &self.chol;
        let (mut v, mut log_x, mut log_y, mut wx, mut wy) = (self.v0, 0.0, 0.0, 0.0, 0.0);
        for step in 0..self.n_steps {
            let e1: f64 = StandardNormal.sample(rng);
            let e2: f64 = StandardNormal.sample(rng);
            let e3: f64 = StandardNormal.sample(rng);
            let dwx = l[0][0] * e1 * self.sqrt_dt;
            let dwy = (l[1][0] * e1 + l[1][1] * e2) * self.sqrt_dt;
            let dz = (l[2][0] * e1 + l[2][1] * e2 + l[2][2] * e3) * self.sqrt_dt;
            let vp = v.max(0.0);
            observe(step, vp);
            let sq = vp.sqrt();
            log_x += -0.5 * self.lx2 * vp * self.dt + self.lx * sq * dwx;
            log_y += -0.5 * self.ly2 * vp * self.dt + self.ly * sq * dwy;
            v += self.kappa * (self.theta - vp) * self.dt + self.nu * sq * dz;
            wx += dwx;
            wy += dwy;
            if !(log_x.is_finite() && log_y.is_finite() && v.is_finite()) {
                return Err(format!("non-finite state at step {step}: ln X {log_x}, ln Y {log_y}, v {v}"));
            }
        }
        let t = self.dt * self.n_steps as f64;
        let var0 = self.v0;
        Ok(PathEnd {
            log_x,
            log_y,
            cv_log_x: -0.5 * self.lx2 * var0 * t + self.lx * var0.sqrt() * wx,
            cv_log_y: -0.5 * self.ly2 * var0 * t + self.ly * var0.sqrt() * wy,
        })
    }
}

/// Simulates `mc.n_paths` terminal states of the model (spots factored out).
pub fn simulate_terminal(model: &TwoAssetModel, maturity: f64, mc: &McConfig) -> Result<Vec<PathEnd>> {
    model.validate()?;
    mc.validate()?;
    if !(maturity > 0.0) || !maturity.is_finite() {
        return Err(PricingError::InvalidInput(format!("maturity must be positive, got {maturity}")));
    }
    let stepper = Stepper::new(model, maturity, mc.n_steps(maturity))?;
    let n_chunks = mc.n_paths.div_ceil(CHUNK);
    let chunks: Vec<std::result::Result<Vec<PathEnd>, String>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(mc.n_paths);
            (start..end)
                .map(|i| {
                    let mut rng = path_rng(mc.seed, i as u64);
                    stepper.run(&mut rng, |_, _| {}).map_err(|e| format!("path {i}: {e}"))
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(mc.n_paths);
    for chunk in chunks {
        out.extend(chunk.map_err(PricingError::Numerical)?);
    }
    Ok(out)
}

/// Truncated variance used at each step of path `path_index`.
pub fn variance_path(model: &TwoAssetModel, maturity: f64, mc: &McConfig, path_index: u64) -> Result<Vec<f64>> {
    model.validate()?;
    let stepper = Stepper::new(model, maturity, mc.n_steps(maturity))?;
    let mut rng = path_rng(mc.seed, path_index);
    let mut vs = Vec::with_capacity(stepper.n_steps);
    stepper.run(&mut rng, |_, v| vs.push(v)).map_err(PricingError::Numerical)?;
    Ok(vs)
}

/// Control-variate estimator over paired samples of payoff and control.
pub fn control_variate_estimate(payoffs: &[f64], controls: Option<(&[f64], f64)>, beta: Beta) -> (f64, f64, f64) {
    let n = payoffs.len() as f64;
    let mean_p = payoffs.iter().sum::<f64>() / n;
    let (b, adjusted): (f64, Vec<f64>) = match controls {
        None => (0.0, payoffs.to_vec()),
        Some((cv, cv_mean)) => {
            let b = match beta {
                Beta::Fixed(b) => b,
                Beta::Estimated => {
                    let mean_c = cv.iter().sum::<f64>() / n;
                    let (mut cov, mut var) = (0.0, 0.0);
                    for (p, c) in payoffs.iter().zip(cv) {
                        cov += (p - mean_p) * (c - mean_c);
                        var += (c - mean_c) * (c - mean_c);
                    }
                    if var > 0.0 {
                        cov / var
                    } else {
                        0.0
                    }
                }
            };
            (b, payoffs.iter().zip(cv).map(|(p, c)| p - b * (c - cv_mean)).collect())
        }
    };
    let mean = adjusted.iter().sum::<f64>() / n;
    let stderr = if adjusted.len() > 1 {
        let ss: f64 = adjusted.iter().map(|y| (y - mean) * (y - mean)).sum();
        (ss / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };
    (mean, stderr, b)
}

fn estimate(payoffs: &[f64], cv: Option<(&[f64], f64)>, mc: &McConfig, n_steps: usize) -> PriceEstimate {
    let (value, stderr, beta) = control_variate_estimate(payoffs, cv, mc.beta);
    PriceEstimate { value, stderr, n_paths: payoffs.len(), seed: mc.seed, n_steps, beta }
}

/// Exchange-option prices for several initial `S_0^Y` from one path set.
///
/// The payoff is homogeneous in the spots, so one set of simulated log
/// returns serves every `S_0^Y`.
pub fn exchange_strip_from_paths(
    model: &TwoAssetModel,
    paths: &[PathEnd],
    maturity: f64,
    s0y_list: &[f64],
    mc: &McConfig,
) -> Result<Vec<PriceEstimate>> {
    let sx = model.asset_x.s0;
    let n_steps = mc.n_steps(maturity);
    s0y_list
        .iter()
        .map(|&sy| {
            if !(sy > 0.0) {
                return Err(PricingError::InvalidInput(format!("S0^Y must be positive, got {sy}")));
            }
            let payoffs: Vec<f64> = paths.iter().map(|p| (sx * p.log_x.exp() - sy * p.log_y.exp()).max(0.0)).collect();
            if !mc.use_control_variate {
                return Ok(estimate(&payoffs, None, mc, n_steps));
            }
            let cv: Vec<f64> = paths.iter().map(|p| (sx * p.cv_log_x.exp() - sy * p.cv_log_y.exp()).max(0.0)).collect();
            let cv_mean = margrabe::margrabe_price(sx.ln(), sy.ln(), model.exchange_vol0(), maturity)?;
            Ok(estimate(&payoffs, Some((&cv, cv_mean)), mc, n_steps))
        })
        .collect()
}

/// `E (S_T^X - S_T^Y)^+` for each initial `S_0^Y` in `s0y_list`.
pub fn simulate_exchange_strip(
    model: &TwoAssetModel,
    maturity: f64,
    s0y_list: &[f64],
    mc: &McConfig,
) -> Result<Vec<PriceEstimate>> {
    let paths = simulate_terminal(model, maturity, mc)?;
    exchange_strip_from_paths(model, &paths, maturity, s0y_list, mc)
}

/// `E (S_T^X - S_T^Y)^+` with the model's own spots.
pub fn simulate_exchange(model: &TwoAssetModel, maturity: f64, mc: &McConfig) -> Result<PriceEstimate> {
    Ok(simulate_exchange_strip(model, maturity, &[model.asset_y.s0], mc)?[0])
}

/// Vanilla calls on one leg for several strikes from one path set.
pub fn vanilla_strip_from_paths(
    model: &TwoAssetModel,
    paths: &[PathEnd],
    asset: AssetId,
    strikes: &[f64],
    maturity: f64,
    mc: &McConfig,
) -> Result<Vec<PriceEstimate>> {
    let spec = model.asset(asset);
    let s0 = spec.s0;
    let n_steps = mc.n_steps(maturity);
    let pick = |p: &PathEnd| match asset {
        AssetId::X => (p.log_x, p.cv_log_x),
        AssetId::Y => (p.log_y, p.cv_log_y),
    };
    strikes
        .iter()
        .map(|&k| {
            if !(k >= 0.0) {
                return Err(PricingError::InvalidInput(format!("strike must be non-negative, got {k}")));
            }
            let payoffs: Vec<f64> = paths.iter().map(|p| (s0 * pick(p).0.exp() - k).max(0.0)).collect();
            if !mc.use_control_variate {
                return Ok(estimate(&payoffs, None, mc, n_steps));
            }
            let cv: Vec<f64> = paths.iter().map(|p| (s0 * pick(p).1.exp() - k).max(0.0)).collect();
            let vol = spec.lambda * model.heston.sigma0;
            let log_k = if k == 0.0 { f64::NEG_INFINITY } else { k.ln() };
            let cv_mean = blackscholes::bs_price(&VanillaSpec::new(0.0, maturity, s0.ln(), log_k, vol))?;
            Ok(estimate(&payoffs, Some((&cv, cv_mean)), mc, n_steps))
        })
        .collect()
}

/// European call on one leg, with a Black-Scholes control variate at
/// volatility `lambda_i sigma0`.
pub fn simulate_vanilla(
    model: &TwoAssetModel,
    asset: AssetId,
    strike: f64,
    maturity: f64,
    mc: &McConfig,
) -> Result<PriceEstimate> {
    let paths = simulate_terminal(model, maturity, mc)?;
    Ok(vanilla_strip_from_paths(model, &paths, asset, &[strike], maturity, mc)?[0])
}

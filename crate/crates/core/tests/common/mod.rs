//! Fixtures shared by the integration and acceptance tests.
#![allow(dead_code)]

use strikeconv::experiments::{test_case_model, GridSpec};
use strikeconv::heston::{leg_vanilla_price, AssetSpec};
use strikeconv::margrabe::exchange_implied_vol;
use strikeconv::simulation::{
    exchange_strip_from_paths, simulate_exchange, simulate_terminal, validate_correlation, vanilla_strip_from_paths,
    AssetId, CorrelationStructure, McConfig, TwoAssetModel,
};

/// Extreme maturities of the sweep.
pub const CORNER_T: [f64; 2] = [0.05, 1.0];

/// Valid `(rho, rho_X, rho_Y)` triples built from the extremes of each list.
pub fn corner_triples() -> Vec<CorrelationStructure> {
    let g = GridSpec::default();
    let ends = |l: &[f64]| [l[0], l[l.len() - 1]];
    let mut out = Vec::new();
    for rho in ends(&g.rho_list) {
        for rx in ends(&g.rho_x_list) {
            for ry in ends(&g.rho_y_list) {
                let c = CorrelationStructure::new(rho, rx, ry);
                if validate_correlation(&c).valid {
                    out.push(c);
                }
            }
        }
    }
    out
}

/// Sweep model at a correlation triple, both spots at 100.
pub fn corner_model(c: &CorrelationStructure) -> TwoAssetModel {
    let g = GridSpec::default();
    TwoAssetModel {
        heston: g.heston,
        asset_x: AssetSpec { lambda: g.lambda_x, rho_sv: c.rho_x, s0: g.s0x },
        asset_y: AssetSpec { lambda: g.lambda_y, rho_sv: c.rho_y, s0: g.s0x },
        rho: c.rho,
    }
}

/// Outcome of one statistical or numerical check.
#[derive(Debug, Clone)]
pub struct Check {
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }

    /// All checks must pass; details of the failures are kept.
    pub fn all(name: &str, checks: Vec<Check>) -> Check {
        let failed: Vec<_> = checks.iter().filter(|c| !c.pass).map(|c| c.detail.clone()).collect();
        if failed.is_empty() {
            Check::new(true, format!("{name}: {} checks", checks.len()))
        } else {
            Check::new(false, format!("{name}: {} of {} failed: {}", failed.len(), checks.len(), failed.join("; ")))
        }
    }
}

/// Time grid fine enough that Euler bias is well below MC noise at the
/// path counts used here.
pub fn fine_mc(maturity: f64, n_paths: usize, seed: u64) -> McConfig {
    let steps_per_year = (200.0 / maturity).ceil().max(1000.0) as usize;
    McConfig { n_paths, steps_per_year, seed, ..Default::default() }
}

/// Heston closed form against simulated calls on both legs of every corner,
/// at three strikes spanning about one standard deviation.
pub fn cross_oracle(n_paths: usize, seed: u64, z_max: f64) -> Check {
    let mut checks = Vec::new();
    for c in corner_triples() {
        let m = corner_model(&c);
        for t in CORNER_T {
            let mc = fine_mc(t, n_paths, seed);
            let paths = simulate_terminal(&m, t, &mc).expect("valid corner");
            let w: f64 = if t < 0.1 { 0.1 } else { 0.25 };
            let strikes = [100.0 * (-w).exp(), 100.0, 100.0 * w.exp()];
            for (id, spec) in [(AssetId::X, m.asset_x), (AssetId::Y, m.asset_y)] {
                let est = vanilla_strip_from_paths(&m, &paths, id, &strikes, t, &mc).expect("strip");
                for (&k, e) in strikes.iter().zip(est) {
                    let h = leg_vanilla_price(&m.heston, &spec, k, t).expect("closed form");
                    let z = (e.value - h) / e.stderr;
                    checks.push(Check::new(
                        z.abs() <= z_max,
                        format!("{c:?} T={t} {id:?} K={k:.2}: mc {:.5} closed {h:.5} z {z:.2}", e.value),
                    ));
                }
            }
        }
    }
    Check::all("cross-oracle", checks)
}

/// `E S_T = S_0` for both legs and a smaller error bar with the control
/// variate than without, on every corner.
pub fn martingale_and_control(n_paths: usize, seed: u64) -> Check {
    let mut checks = Vec::new();
    for c in corner_triples() {
        let m = corner_model(&c);
        for t in CORNER_T {
            let mc = McConfig { n_paths, seed, ..Default::default() };
            let paths = simulate_terminal(&m, t, &mc).expect("valid corner");
            for (name, pick) in [("X", 0usize), ("Y", 1)] {
                let s: Vec<f64> = paths.iter().map(|p| [p.log_x, p.log_y][pick].exp()).collect();
                let n = s.len() as f64;
                let mean = s.iter().sum::<f64>() / n;
                let se = (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt();
                let z = (mean - 1.0) / se;
                checks.push(Check::new(z.abs() <= 3.0, format!("{c:?} T={t} E[{name}_T/{name}_0] {mean:.6} z {z:.2}")));
            }
            let with = exchange_strip_from_paths(&m, &paths, t, &[90.0, 100.0, 110.0], &mc).expect("strip");
            let plain = McConfig { use_control_variate: false, ..mc };
            let without = exchange_strip_from_paths(&m, &paths, t, &[90.0, 100.0, 110.0], &plain).expect("strip");
            for ((a, b), s0y) in with.iter().zip(&without).zip([90.0, 100.0, 110.0]) {
                // Far out of the money both error bars are at rounding level.
                let reduced = if s0y == 100.0 { a.stderr < b.stderr } else { a.stderr <= b.stderr * (1.0 + 1e-9) };
                checks.push(Check::new(
                    reduced && (a.value - b.value).abs() <= 3.0 * b.stderr,
                    format!("{c:?} T={t} S0Y={s0y}: stderr {:.3e} with control, {:.3e} without", a.stderr, b.stderr),
                ));
            }
        }
    }
    Check::all("martingale and control variate", checks)
}

/// ATM exchange implied vol against `sigma~_0` as the maturity shrinks:
/// the gap must shrink roughly linearly in `T`.
pub fn zero_order_convergence(n_paths: usize, seed: u64) -> Check {
    let mut checks = Vec::new();
    for case in [1u8, 2] {
        let m = test_case_model(case).expect("test case");
        let target = m.exchange_vol0();
        let x = m.asset_x.s0.ln();
        let mut prev = f64::INFINITY;
        let mut first = None;
        for t in [0.05, 0.02, 0.01, 0.005] {
            let mc = McConfig { n_paths, steps_per_year: (200.0 / t) as usize, seed, ..Default::default() };
            let e = simulate_exchange(&m, t, &mc).expect("simulation");
            let g = exchange_implied_vol(e.value, x, x, t).expect("implied vol");
            let g_up = exchange_implied_vol(e.value + e.stderr, x, x, t).expect("implied vol");
            let noise = 3.0 * (g_up - g);
            let gap = (g - target).abs();
            let (t0, gap0) = *first.get_or_insert((t, gap));
            let bound = 1.5 * gap0 * t / t0 + noise;
            checks.push(Check::new(
                gap < prev + noise && gap <= bound,
                format!("case {case} T={t}: gamma_hat {g:.5} target {target:.5} gap {gap:.5} bound {bound:.5}"),
            ));
            prev = gap;
        }
    }
    Check::all("zero-order convergence", checks)
}

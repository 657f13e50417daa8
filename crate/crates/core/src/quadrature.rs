//! Adaptive Gauss-Legendre quadrature.

use std::sync::OnceLock;

use crate::error::{PricingError, Result};

const ORDER: usize = 16;
const MAX_DEPTH: u32 = 40;

struct Rule {
    nodes: [f64; ORDER],
    weights: [f64; ORDER],
}

/// Gauss-Legendre nodes and weights on [-1, 1], computed once by Newton
/// iteration on the Legendre recurrence.
fn rule() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = ORDER;
        let mut nodes = [0.0; ORDER];
        let mut weights = [0.0; ORDER];
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                for j in 2..=n {
                    let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Rule { nodes, weights }
    })
}

/// Fixed-order Gauss-Legendre estimate on `[a, b]`.
pub fn gauss_legendre<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let r = rule();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    r.nodes.iter().zip(r.weights.iter()).map(|(&z, &w)| w * f(mid + half * z)).sum::<f64>() * half
}

/// Recursive bisection until the whole-interval and split estimates agree
/// to `tol`. Fails rather than returning an unconverged value.
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let whole = gauss_legendre(f, a, b);
    refine(f, a, b, whole, tol, 0)
}

fn refine<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> Result<f64> {
    let mid = 0.5 * (a + b);
    let left = gauss_legendre(f, a, mid);
    let right = gauss_legendre(f, mid, b);
    let split = left + right;
    if !split.is_finite() {
        return Err(PricingError::Numerical(format!("non-finite integrand on [{a}, {b}]")));
    }
    if (split - whole).abs() <= tol.max(8.0 * f64::EPSILON * split.abs()) {
        return Ok(split);
    }
    if depth >= MAX_DEPTH {
        return Err(PricingError::Numerical(format!(
            "quadrature on [{a}, {b}] not converged: estimate change {:e} above {tol:e}",
            (split - whole).abs()
        )));
    }
    Ok(refine(f, a, mid, left, 0.5 * tol, depth + 1)? + refine(f, mid, b, right, 0.5 * tol, depth + 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        let s: f64 = rule().weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn exact_for_high_degree_polynomials() {
        let f = |x: f64| x.powi(30) - 3.0 * x.powi(7);
        let got = gauss_legendre(&f, 0.0, 1.0);
        assert!((got - (1.0 / 31.0 - 3.0 / 8.0)).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        let f = |x: f64| 1.0 / (1e-4 + x * x);
        let got = adaptive(&f, -1.0, 1.0, 1e-12).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((got - exact).abs() < 1e-9);
    }
}

//! Monte Carlo against closed forms, and end-to-end experiment invariants.

mod common;

use strikeconv::convention::A_BOUNDS;
use strikeconv::experiments::*;
use strikeconv::heston::{effective_heston, leg_vanilla_price, AssetSpec, HestonParams};
use strikeconv::simulation::{simulate_exchange, simulate_vanilla, AssetId, McConfig};

#[test]
fn simulated_calls_match_closed_form() {
    let c = common::cross_oracle(50_000, 17, 4.0);
    assert!(c.pass, "{}", c.detail);
}

#[test]
fn martingale_and_variance_reduction() {
    let c = common::martingale_and_control(20_000, 5);
    assert!(c.pass, "{}", c.detail);
}

#[test]
fn atm_exchange_vol_converges_to_initial_vol() {
    let c = common::zero_order_convergence(100_000, 9);
    assert!(c.pass, "{}", c.detail);
}

#[test]
fn step_refinement_moves_atm_price_less_than_one_stderr() {
    let m = test_case_model(1).unwrap();
    let coarse = McConfig { n_paths: 100_000, ..Default::default() };
    let fine = McConfig { steps_per_year: 2 * coarse.steps_per_year, ..coarse };
    let a = simulate_exchange(&m, TEST_CASE_MATURITY, &coarse).unwrap();
    let b = simulate_exchange(&m, TEST_CASE_MATURITY, &fine).unwrap();
    assert!((a.value - b.value).abs() < a.stderr.max(b.stderr), "{a:?} {b:?}");
}

#[test]
fn scaled_leg_equals_unit_leg_with_effective_params() {
    // Simulating lambda sigma_t must agree with a lambda = 1 leg driven by
    // the effective parameters.
    let model = HestonParams::new(1.5, 0.15, 0.5, 0.15).unwrap();
    let leg = AssetSpec { lambda: 1.24, rho_sv: -0.42, s0: 100.0 };
    let eff = effective_heston(&model, &leg);
    let unit = AssetSpec { lambda: 1.0, ..leg };
    let direct = leg_vanilla_price(&model, &leg, 105.0, 0.5).unwrap();
    let via_eff = leg_vanilla_price(&eff, &unit, 105.0, 0.5).unwrap();
    assert!((direct - via_eff).abs() < 1e-12);

    let mut two = test_case_model(1).unwrap();
    two.asset_x = leg;
    let mc = common::fine_mc(0.5, 100_000, 23);
    let est = simulate_vanilla(&two, AssetId::X, 105.0, 0.5, &mc).unwrap();
    assert!((est.value - direct).abs() < 3.0 * est.stderr, "{est:?} vs {direct}");
}

#[test]
fn conventions_coincide_at_the_money() {
    let mc = McConfig { n_paths: 5000, ..Default::default() };
    for case in [1, 2] {
        let r = run_test_case(case, &mc, EXPERIMENT_SKEW_STEP).unwrap();
        let price = |c| r.row(c, 100.0).unwrap().margrabe_price.unwrap();
        let base = price(ConventionKind::A0);
        for c in [ConventionKind::A1, ConventionKind::AStar] {
            assert!((price(c) - base).abs() <= 1e-12);
        }
        // Every S0^Y carries all three conventions and shares one MC price.
        for s0y in test_case_s0y() {
            let mcs: Vec<f64> = [ConventionKind::A0, ConventionKind::A1, ConventionKind::AStar]
                .iter()
                .map(|&c| r.row(c, s0y).unwrap().mc_price.unwrap())
                .collect();
            assert!(mcs.iter().all(|&v| v == mcs[0]));
        }
    }
}

#[test]
fn grid_rows_account_for_every_point() {
    let spec = GridSpec {
        t_list: vec![0.1],
        rho_list: vec![0.5, 0.9],
        mc: McConfig { n_paths: 4000, ..Default::default() },
        ..GridSpec::default()
    };
    let res = run_grid(&spec).unwrap();
    let counts = dry_run(&spec).unwrap();
    assert_eq!(res.rows.len(), counts.rows);
    let invalid = res.rows.iter().filter(|r| r.exclusion_reason == reason::INVALID_CORRELATION).count();
    assert_eq!(invalid, counts.invalid_points * spec.conventions.len());

    let report = full_report(&res.rows, spec.s0x, MstdMode::Signed);
    for e in &report.entries {
        assert!(e.counts.balanced(), "{e:?}");
        if let Some(m) = e.metrics {
            assert!(m.mae >= 0.0 && m.mape >= 0.0 && m.rmse >= 0.0 && m.mstd >= 0.0);
            assert!(m.max_ae >= m.mae && m.rmse >= m.mae - 1e-15);
        }
    }

    // Some a* fall outside the bounded range at rho = 0.5; the bounded
    // convention clamps them.
    let stars: Vec<&ResultRow> = res.rows.iter().filter(|r| r.convention == ConventionKind::AStar).collect();
    assert!(stars.iter().filter_map(|r| r.a_value).any(|a| a < A_BOUNDS.0 || a > A_BOUNDS.1));
    for r in res.rows.iter().filter(|r| r.convention == ConventionKind::AStarBounded) {
        if let Some(a) = r.a_value {
            assert!((A_BOUNDS.0..=A_BOUNDS.1).contains(&a));
        }
    }

    let mut buf = Vec::new();
    write_rows_csv(&mut buf, &res.rows).unwrap();
    assert_eq!(read_rows_csv(buf.as_slice()).unwrap(), res.rows);
}

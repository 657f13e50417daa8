//! Test cases and grid sweep comparing strike conventions against a Monte
//! Carlo benchmark, with error metrics and plot-ready CSV output.
//!
//! Every grid point `(T, rho, rho_X, rho_Y, S0^Y)` yields one row per
//! convention. Errors are signed, `Margrabe - MC`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convention::{self, LinearConvention, A_BOUNDS};
use crate::error::{PricingError, Result};
use crate::heston::{self, AssetSpec, HestonParams, Smile, SmileObservables};
use crate::margrabe;
use crate::simulation::{self, CorrelationStructure, McConfig, PriceEstimate, TwoAssetModel};

/// Central-difference step used to measure ATM skews in the experiments.
///
/// Strikes at `S0 / 1.25` and `1.25 S0`. The `a*` of the short-dated test
/// cases is sensitive to this choice; see the README.
pub const EXPERIMENT_SKEW_STEP: f64 = 0.223_143_551_314_209_76;

/// MC prices below this are excluded from the metrics.
pub const SUB_CENT: f64 = 0.01;

/// Strike convention compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConventionKind {
    /// `a = 0`, own ATM vols.
    A0,
    /// `a = 1`, vol look-up.
    A1,
    AStar,
    /// `a*` clamped to [`A_BOUNDS`].
    AStarBounded,
}

impl ConventionKind {
    pub const ALL: [ConventionKind; 4] = [Self::A0, Self::A1, Self::AStar, Self::AStarBounded];

    pub fn label(self) -> &'static str {
        match self {
            Self::A0 => "a0",
            Self::A1 => "a1",
            Self::AStar => "a_star",
            Self::AStarBounded => "a_star_bounded",
        }
    }

    /// Concrete convention, given `a*` when one is needed.
    pub fn resolve(self, a_star: &Result<f64>) -> Result<LinearConvention> {
        match self {
            Self::A0 => Ok(LinearConvention::own_atm()),
            Self::A1 => Ok(LinearConvention::lookup()),
            Self::AStar => a_star.clone().map(LinearConvention::new),
            Self::AStarBounded => a_star.clone().map(LinearConvention::bounded),
        }
    }
}

impl fmt::Display for ConventionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ConventionKind {
    type Err = PricingError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| PricingError::InvalidInput(format!("unknown convention {s:?}")))
    }
}

/// Parameter sweep. Defaults reproduce the full study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub t_list: Vec<f64>,
    pub s0x: f64,
    pub s0y_list: Vec<f64>,
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub heston: HestonParams,
    pub rho_list: Vec<f64>,
    pub rho_x_list: Vec<f64>,
    pub rho_y_list: Vec<f64>,
    pub mc: McConfig,
    pub conventions: Vec<ConventionKind>,
    pub skew_step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            t_list: vec![0.05, 0.1, 0.25, 0.5, 1.0],
            s0x: 100.0,
            s0y_list: (0..11).map(|i| 80.0 + 4.0 * i as f64).collect(),
            lambda_x: 1.0,
            lambda_y: 1.24,
            heston: HestonParams { kappa: 1.5, theta: 0.15, nu: 0.5, sigma0: 0.15 },
            rho_list: vec![-0.9, -0.7, -0.5, -0.3, -0.1, 0.1, 0.3, 0.5, 0.7, 0.9],
            rho_x_list: vec![-0.72, -0.42, -0.12, 0.18, 0.48],
            rho_y_list: vec![-0.61, -0.31, -0.01, 0.29, 0.59],
            mc: McConfig::default(),
            conventions: ConventionKind::ALL.to_vec(),
            skew_step: EXPERIMENT_SKEW_STEP,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        self.heston.validate()?;
        self.mc.validate()?;
        let lists: [(&str, &[f64]); 5] = [
            ("t_list", &self.t_list),
            ("s0y_list", &self.s0y_list),
            ("rho_list", &self.rho_list),
            ("rho_x_list", &self.rho_x_list),
            ("rho_y_list", &self.rho_y_list),
        ];
        for (name, list) in lists {
            if list.is_empty() {
                return Err(PricingError::InvalidInput(format!("{name} is empty")));
            }
            if list.iter().any(|v| !v.is_finite()) {
                return Err(PricingError::InvalidInput(format!("{name} has a non-finite entry")));
            }
        }
        if self.t_list.iter().chain(&self.s0y_list).any(|&v| v <= 0.0) || !(self.s0x > 0.0) {
            return Err(PricingError::InvalidInput("maturities and spots must be positive".into()));
        }
        for &r in self.rho_list.iter().chain(&self.rho_x_list).chain(&self.rho_y_list) {
            if r.abs() > 1.0 {
                return Err(PricingError::InvalidInput(format!("correlation {r} outside [-1, 1]")));
            }
        }
        for (name, l) in [("lambda_x", self.lambda_x), ("lambda_y", self.lambda_y)] {
            if !(l > 0.0 && l.is_finite()) {
                return Err(PricingError::InvalidInput(format!("{name} must be positive, got {l}")));
            }
        }
        if self.conventions.is_empty() {
            return Err(PricingError::InvalidInput("no conventions selected".into()));
        }
        if !(self.skew_step > 0.0 && self.skew_step.is_finite()) {
            return Err(PricingError::InvalidInput(format!("skew_step must be positive, got {}", self.skew_step)));
        }
        Ok(())
    }

    fn asset(&self, lambda: f64, rho_sv: f64) -> AssetSpec {
        AssetSpec { lambda, rho_sv, s0: self.s0x }
    }

    fn model(&self, rho: f64, rho_x: f64, rho_y: f64) -> TwoAssetModel {
        TwoAssetModel {
            heston: self.heston,
            asset_x: self.asset(self.lambda_x, rho_x),
            asset_y: self.asset(self.lambda_y, rho_y),
            rho,
        }
    }

    /// `(rho, rho_X, rho_Y)` triples in sweep order.
    pub fn triples(&self) -> Vec<CorrelationStructure> {
        let mut out = Vec::with_capacity(self.rho_list.len() * self.rho_x_list.len() * self.rho_y_list.len());
        for &rho in &self.rho_list {
            for &rx in &self.rho_x_list {
                for &ry in &self.rho_y_list {
                    out.push(CorrelationStructure::new(rho, rx, ry));
                }
            }
        }
        out
    }
}

/// Point counts of a sweep, computed without simulating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DryRunCounts {
    pub triples: usize,
    pub invalid_triples: usize,
    /// `(T, rho, rho_X, rho_Y, S0^Y)` points.
    pub points: usize,
    pub invalid_points: usize,
    pub rows: usize,
}

impl DryRunCounts {
    pub fn invalid_fraction(&self) -> f64 {
        self.invalid_triples as f64 / self.triples as f64
    }
}

pub fn dry_run(spec: &GridSpec) -> Result<DryRunCounts> {
    spec.validate()?;
    let triples = spec.triples();
    let invalid_triples = triples.iter().filter(|c| !simulation::validate_correlation(c).valid).count();
    let per_triple = spec.t_list.len() * spec.s0y_list.len();
    let points = triples.len() * per_triple;
    Ok(DryRunCounts {
        triples: triples.len(),
        invalid_triples,
        points,
        invalid_points: invalid_triples * per_triple,
        rows: points * spec.conventions.len(),
    })
}

/// Why a row is left out of the metrics.
pub mod reason {
    pub const INVALID_CORRELATION: &str = "invalid_correlation";
    pub const SUB_CENT: &str = "sub_cent";
    pub const NUMERICAL_FAILURE: &str = "numerical_failure";
}

/// One convention at one grid point. Missing values are empty in CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    #[serde(rename = "T")]
    pub t: f64,
    pub rho: f64,
    #[serde(rename = "rho_X")]
    pub rho_x: f64,
    #[serde(rename = "rho_Y")]
    pub rho_y: f64,
    #[serde(rename = "s0Y")]
    pub s0y: f64,
    pub convention: ConventionKind,
    pub a_value: Option<f64>,
    #[serde(rename = "kX")]
    pub k_x: Option<f64>,
    #[serde(rename = "kY")]
    pub k_y: Option<f64>,
    #[serde(rename = "IX")]
    pub i_x: Option<f64>,
    #[serde(rename = "IY")]
    pub i_y: Option<f64>,
    pub margrabe_price: Option<f64>,
    pub mc_price: Option<f64>,
    pub mc_stderr: Option<f64>,
    pub error: Option<f64>,
    pub implied_corr: Option<f64>,
    pub excluded: bool,
    pub exclusion_reason: String,
}

impl ResultRow {
    fn empty(t: f64, c: &CorrelationStructure, s0y: f64, convention: ConventionKind) -> Self {
        Self {
            t,
            rho: c.rho,
            rho_x: c.rho_x,
            rho_y: c.rho_y,
            s0y,
            convention,
            a_value: None,
            k_x: None,
            k_y: None,
            i_x: None,
            i_y: None,
            margrabe_price: None,
            mc_price: None,
            mc_stderr: None,
            error: None,
            implied_corr: None,
            excluded: false,
            exclusion_reason: String::new(),
        }
    }

    fn exclude(mut self, why: impl Into<String>) -> Self {
        self.excluded = true;
        self.exclusion_reason = why.into();
        self
    }

    /// Included rows always carry an error and an MC price.
    pub fn included(&self) -> bool {
        !self.excluded && self.error.is_some() && self.mc_price.is_some()
    }

    fn sort_key(&self) -> (u64, u64, u64, u64, u64, ConventionKind) {
        (ord(self.t), ord(self.rho), ord(self.rho_x), ord(self.rho_y), ord(self.s0y), self.convention)
    }

    /// `(T, rho, rho_X, rho_Y)` parameter combination.
    fn combo(&self) -> [u64; 4] {
        [ord(self.t), ord(self.rho), ord(self.rho_x), ord(self.rho_y)]
    }
}

/// Order-preserving integer image of a float.
fn ord(v: f64) -> u64 {
    let b = v.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

/// Prices one convention at one point against the MC benchmark.
#[allow(clippy::too_many_arguments)]
fn quote_row(
    mut row: ResultRow,
    conv: Result<LinearConvention>,
    smile_x: &Smile,
    smile_y: &Smile,
    s0x: f64,
    mc: &PriceEstimate,
) -> ResultRow {
    let (t, rho, s0y) = (row.t, row.rho, row.s0y);
    row.mc_price = Some(mc.value);
    row.mc_stderr = Some(mc.stderr);
    let conv = match conv {
        Ok(c) => c,
        Err(e) => return row.exclude(format!("{}: {e}", reason::NUMERICAL_FAILURE)),
    };
    let (x, y) = (s0x.ln(), s0y.ln());
    let (kx, ky) = convention::strikes(&conv, x, y);
    let (ix, iy) = (smile_x.vol_at(x, kx), smile_y.vol_at(y, ky));
    row.a_value = Some(conv.a);
    row.k_x = Some(kx);
    row.k_y = Some(ky);
    row.i_x = Some(ix);
    row.i_y = Some(iy);
    let price = margrabe::convention_gamma(ix, iy, rho).and_then(|g| margrabe::margrabe_price(x, y, g, t));
    match price {
        Ok(p) => {
            row.margrabe_price = Some(p);
            row.error = Some(p - mc.value);
        }
        Err(e) => return row.exclude(format!("{}: {e}", reason::NUMERICAL_FAILURE)),
    }
    row.implied_corr = margrabe::exchange_implied_vol(mc.value, x, y, t)
        .and_then(|g| margrabe::implied_correlation(g, ix, iy))
        .ok()
        .map(|c| c.value);
    row
}

/// Implied correlation of an exchange quote under the given leg vols.
pub fn implied_corr_of_price(price: f64, s0x: f64, s0y: f64, maturity: f64, vol_x: f64, vol_y: f64) -> Result<f64> {
    let g = margrabe::exchange_implied_vol(price, s0x.ln(), s0y.ln(), maturity)?;
    Ok(margrabe::implied_correlation(g, vol_x, vol_y)?.value)
}

/// Smile of one leg, kept for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmileCurve {
    pub asset: String,
    pub t: f64,
    pub lambda: f64,
    pub rho_sv: f64,
    /// `(K / S0, implied vol)`; failed inversions are `None`.
    pub points: Vec<(f64, Option<f64>)>,
}

impl SmileCurve {
    fn from_smile(asset: &str, spec: &AssetSpec, smile: &Smile) -> Self {
        Self {
            asset: asset.to_string(),
            t: smile.maturity,
            lambda: spec.lambda,
            rho_sv: spec.rho_sv,
            points: smile
                .points
                .iter()
                .map(|p| (p.strike / smile.spot, p.implied_vol.as_ref().ok().copied()))
                .collect(),
        }
    }
}

/// Rows plus the smiles they were priced from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentResults {
    pub rows: Vec<ResultRow>,
    pub smiles: Vec<SmileCurve>,
}

/// Parameters of the two short-dated test cases; they differ only in `rho_Y`.
pub fn test_case_model(case_id: u8) -> Result<TwoAssetModel> {
    let rho_y = match case_id {
        1 => -0.6,
        2 => 0.4,
        _ => return Err(PricingError::InvalidInput(format!("unknown test case {case_id}, expected 1 or 2"))),
    };
    let heston = HestonParams::new(1.5, 0.15, 0.5, 0.15)?;
    Ok(TwoAssetModel {
        heston,
        asset_x: AssetSpec { lambda: 1.5, rho_sv: -0.4, s0: 100.0 },
        asset_y: AssetSpec { lambda: 1.0, rho_sv: rho_y, s0: 100.0 },
        rho: 0.5,
    })
}

pub const TEST_CASE_MATURITY: f64 = 0.05;

/// `S0^Y` from 80 to 120 in steps of 2.
pub fn test_case_s0y() -> Vec<f64> {
    (0..21).map(|i| 80.0 + 2.0 * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestCaseResult {
    pub case_id: u8,
    pub model: TwoAssetModel,
    pub maturity: f64,
    pub observables: SmileObservables,
    pub a_star: f64,
    pub results: ExperimentResults,
}

impl TestCaseResult {
    /// Row of one convention at one `S0^Y`.
    pub fn row(&self, convention: ConventionKind, s0y: f64) -> Option<&ResultRow> {
        self.results.rows.iter().find(|r| r.convention == convention && r.s0y == s0y)
    }
}

/// Smiles, `a*`, Margrabe prices under `a = 0, 1, a*` and the MC benchmark
/// across `S0^Y`.
pub fn run_test_case(case_id: u8, mc: &McConfig, skew_step: f64) -> Result<TestCaseResult> {
    let model = test_case_model(case_id)?;
    let t = TEST_CASE_MATURITY;
    let observables = heston::measure_atm_observables(&model.heston, &model.asset_x, &model.asset_y, t, skew_step)?;
    let a_star = convention::a_star_observables(&observables, model.rho)?;
    let smile_x = heston::default_smile(&model.heston, &model.asset_x, t)?;
    let smile_y = heston::default_smile(&model.heston, &model.asset_y, t)?;
    let s0y = test_case_s0y();
    let estimates = simulation::simulate_exchange_strip(&model, t, &s0y, mc)?;
    let corr = model.correlation();
    let mut rows = Vec::new();
    for (&sy, est) in s0y.iter().zip(&estimates) {
        for kind in [ConventionKind::A0, ConventionKind::A1, ConventionKind::AStar] {
            let row = ResultRow::empty(t, &corr, sy, kind);
            rows.push(quote_row(row, kind.resolve(&Ok(a_star)), &smile_x, &smile_y, model.asset_x.s0, est));
        }
    }
    rows.sort_by_key(ResultRow::sort_key);
    let smiles = vec![
        SmileCurve::from_smile("X", &model.asset_x, &smile_x),
        SmileCurve::from_smile("Y", &model.asset_y, &smile_y),
    ];
    Ok(TestCaseResult { case_id, model, maturity: t, observables, a_star, results: ExperimentResults { rows, smiles } })
}

/// Runs the sweep. Per-point failures are recorded in the rows; only an
/// invalid spec aborts.
///
/// Every `(rho, rho_X, rho_Y, T)` simulates one path set with `spec.mc.seed`
/// (path `i` on stream `i`) and reprices it across `S0^Y`, so output does
/// not depend on scheduling.
pub fn run_grid(spec: &GridSpec) -> Result<ExperimentResults> {
    spec.validate()?;
    let ts = &spec.t_list;

    // Smiles and ATM observables per (T, leg, rho_sv).
    let mut legs: Vec<(usize, &str, f64, f64)> = Vec::new();
    for ti in 0..ts.len() {
        legs.extend(spec.rho_x_list.iter().map(|&r| (ti, "X", spec.lambda_x, r)));
        legs.extend(spec.rho_y_list.iter().map(|&r| (ti, "Y", spec.lambda_y, r)));
    }
    type LegData = (Result<Smile>, Result<(f64, f64)>);
    let leg_data: Vec<LegData> = legs
        .par_iter()
        .map(|&(ti, _, lambda, rho_sv)| {
            let asset = spec.asset(lambda, rho_sv);
            let smile = heston::default_smile(&spec.heston, &asset, ts[ti]);
            let atm = heston::atm_level_and_skew(&spec.heston, &asset, ts[ti], spec.skew_step);
            (smile, atm)
        })
        .collect();
    let mut cache: BTreeMap<(usize, &str, u64), &LegData> = BTreeMap::new();
    for (leg, data) in legs.iter().zip(&leg_data) {
        cache.insert((leg.0, leg.1, ord(leg.3)), data);
    }
    let mut smiles = Vec::new();
    for (&(ti, name, lambda, rho_sv), (smile, _)) in legs.iter().zip(&leg_data) {
        if let Ok(s) = smile {
            smiles.push(SmileCurve::from_smile(name, &spec.asset(lambda, rho_sv), s));
        } else {
            smiles.push(SmileCurve { asset: name.into(), t: ts[ti], lambda, rho_sv, points: Vec::new() });
        }
    }

    let combos: Vec<(usize, CorrelationStructure)> =
        spec.triples().into_iter().flat_map(|c| (0..ts.len()).map(move |ti| (ti, c))).collect();
    let blocks: Vec<Vec<ResultRow>> = combos
        .par_iter()
        .map(|&(ti, c)| {
            let x = cache[&(ti, "X", ord(c.rho_x))];
            let y = cache[&(ti, "Y", ord(c.rho_y))];
            grid_block(spec, ts[ti], &c, x, y)
        })
        .collect();
    let mut rows: Vec<ResultRow> = blocks.into_iter().flatten().collect();
    rows.sort_by_key(ResultRow::sort_key);
    Ok(ExperimentResults { rows, smiles })
}

fn grid_block(
    spec: &GridSpec,
    t: f64,
    c: &CorrelationStructure,
    leg_x: &(Result<Smile>, Result<(f64, f64)>),
    leg_y: &(Result<Smile>, Result<(f64, f64)>),
) -> Vec<ResultRow> {
    let mut rows = Vec::with_capacity(spec.s0y_list.len() * spec.conventions.len());
    let all_fail = |why: String| -> Vec<ResultRow> {
        spec.s0y_list
            .iter()
            .flat_map(|&sy| spec.conventions.iter().map(move |&k| (sy, k)))
            .map(|(sy, k)| ResultRow::empty(t, c, sy, k).exclude(why.clone()))
            .collect()
    };
    if !simulation::validate_correlation(c).valid {
        return all_fail(reason::INVALID_CORRELATION.into());
    }
    let (smile_x, smile_y) = match (&leg_x.0, &leg_y.0) {
        (Ok(sx), Ok(sy)) => (sx, sy),
        (Err(e), _) | (_, Err(e)) => return all_fail(format!("{}: smile: {e}", reason::NUMERICAL_FAILURE)),
    };
    let a_star = match (&leg_x.1, &leg_y.1) {
        (Ok((ix, sx)), Ok((iy, sy))) => {
            let obs =
                SmileObservables { atm_level_x: *ix, atm_level_y: *iy, atm_skew_x: *sx, atm_skew_y: *sy, maturity: t };
            convention::a_star_observables(&obs, c.rho)
        }
        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
    };
    let model = spec.model(c.rho, c.rho_x, c.rho_y);
    let estimates = match simulation::simulate_exchange_strip(&model, t, &spec.s0y_list, &spec.mc) {
        Ok(e) => e,
        Err(e) => return all_fail(format!("{}: monte carlo: {e}", reason::NUMERICAL_FAILURE)),
    };
    for (&sy, est) in spec.s0y_list.iter().zip(&estimates) {
        for &kind in &spec.conventions {
            let row =
                quote_row(ResultRow::empty(t, c, sy, kind), kind.resolve(&a_star), smile_x, smile_y, spec.s0x, est);
            rows.push(if est.value < SUB_CENT && !row.excluded { row.exclude(reason::SUB_CENT) } else { row });
        }
    }
    rows
}

/// How rows are grouped before averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    All,
    ByT,
    ByTRho,
}

/// Which rows enter the averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Every included row.
    Normal,
    /// Drops parameter combinations whose `a*` lies outside [`A_BOUNDS`],
    /// for every convention.
    AStarFiltered,
}

/// How the MStd metric treats errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MstdMode {
    /// Population std of signed errors.
    #[default]
    Signed,
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub mape: f64,
    pub rmse: f64,
    pub max_ae: f64,
    /// Mean over parameter combinations of the std of errors across `S0^Y`.
    pub mstd: f64,
    /// MAE over `S0^Y = S0^X` points; `None` when there are none.
    pub atm_error: Option<f64>,
}

/// Point accounting: the four counts sum to `total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PointCounts {
    pub total: usize,
    pub included: usize,
    pub invalid_correlation: usize,
    pub sub_cent: usize,
    pub a_star_filter: usize,
    pub numerical_failure: usize,
}

impl PointCounts {
    pub fn balanced(&self) -> bool {
        self.included + self.invalid_correlation + self.sub_cent + self.a_star_filter + self.numerical_failure
            == self.total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupKey {
    #[serde(rename = "T")]
    pub t: Option<f64>,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub grouping: Grouping,
    pub key: GroupKey,
    pub convention: ConventionKind,
    pub variant: Variant,
    pub counts: PointCounts,
    /// `None` marks an empty group.
    pub metrics: Option<Metrics>,
    pub status: String,
}

pub const EMPTY_GROUP: &str = "empty_group";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorReport {
    pub entries: Vec<ReportEntry>,
}

impl ErrorReport {
    pub fn find(
        &self,
        grouping: Grouping,
        key: GroupKey,
        convention: ConventionKind,
        variant: Variant,
    ) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| {
            e.grouping == grouping
                && e.convention == convention
                && e.variant == variant
                && e.key.t.map(ord) == key.t.map(ord)
                && e.key.rho.map(ord) == key.rho.map(ord)
        })
    }
}

fn group_key(grouping: Grouping, row: &ResultRow) -> GroupKey {
    match grouping {
        Grouping::All => GroupKey { t: None, rho: None },
        Grouping::ByT => GroupKey { t: Some(row.t), rho: None },
        Grouping::ByTRho => GroupKey { t: Some(row.t), rho: Some(row.rho) },
    }
}

/// `a*` of each parameter combination, read off its `a_star` rows.
fn combo_a_star(rows: &[ResultRow]) -> BTreeMap<[u64; 4], f64> {
    rows.iter()
        .filter(|r| r.convention == ConventionKind::AStar)
        .filter_map(|r| r.a_value.map(|a| (r.combo(), a)))
        .collect()
}

fn metrics_of(rows: &[&ResultRow], atm_s0: f64, mstd: MstdMode) -> Option<Metrics> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let errs: Vec<f64> = rows.iter().map(|r| r.error.unwrap_or(f64::NAN)).collect();
    let mae = errs.iter().map(|e| e.abs()).sum::<f64>() / n;
    let mape = rows.iter().zip(&errs).map(|(r, e)| (e / r.mc_price.unwrap_or(f64::NAN)).abs()).sum::<f64>() / n;
    let rmse = (errs.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let max_ae = errs.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let mut by_combo: BTreeMap<[u64; 4], Vec<f64>> = BTreeMap::new();
    for (r, e) in rows.iter().zip(&errs) {
        let v = match mstd {
            MstdMode::Signed => *e,
            MstdMode::Absolute => e.abs(),
        };
        by_combo.entry(r.combo()).or_default().push(v);
    }
    let mstd = by_combo.values().map(|v| population_std(v)).sum::<f64>() / by_combo.len() as f64;
    let atm: Vec<f64> = rows.iter().zip(&errs).filter(|(r, _)| r.s0y == atm_s0).map(|(_, e)| e.abs()).collect();
    let atm_error = (!atm.is_empty()).then(|| atm.iter().sum::<f64>() / atm.len() as f64);
    Some(Metrics { mae, mape, rmse, max_ae, mstd, atm_error })
}

fn population_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Metrics per group, convention and variant. Groups are formed from all
/// rows, so a group whose rows are all excluded is reported as empty.
pub fn compute_metrics(
    rows: &[ResultRow],
    grouping: Grouping,
    variants: &[Variant],
    atm_s0: f64,
    mstd: MstdMode,
) -> ErrorReport {
    let a_stars = combo_a_star(rows);
    let mut groups: BTreeMap<(Option<u64>, Option<u64>, ConventionKind), (GroupKey, Vec<&ResultRow>)> = BTreeMap::new();
    for r in rows {
        let key = group_key(grouping, r);
        groups.entry((key.t.map(ord), key.rho.map(ord), r.convention)).or_insert_with(|| (key, Vec::new())).1.push(r);
    }
    let mut entries = Vec::new();
    for ((_, _, convention), (key, members)) in &groups {
        for &variant in variants {
            let mut counts = PointCounts { total: members.len(), ..Default::default() };
            let mut used = Vec::new();
            for r in members {
                if r.excluded {
                    if r.exclusion_reason == reason::INVALID_CORRELATION {
                        counts.invalid_correlation += 1;
                    } else if r.exclusion_reason == reason::SUB_CENT {
                        counts.sub_cent += 1;
                    } else {
                        counts.numerical_failure += 1;
                    }
                    continue;
                }
                if !r.included() {
                    counts.numerical_failure += 1;
                    continue;
                }
                if variant == Variant::AStarFiltered {
                    let inside = a_stars.get(&r.combo()).is_some_and(|a| (A_BOUNDS.0..=A_BOUNDS.1).contains(a));
                    if !inside {
                        counts.a_star_filter += 1;
                        continue;
                    }
                }
                counts.included += 1;
                used.push(*r);
            }
            let metrics = metrics_of(&used, atm_s0, mstd);
            let status = if metrics.is_some() { "ok" } else { EMPTY_GROUP };
            entries.push(ReportEntry {
                grouping,
                key: *key,
                convention: *convention,
                variant,
                counts,
                metrics,
                status: status.into(),
            });
        }
    }
    if entries.is_empty() {
        for &variant in variants {
            for convention in ConventionKind::ALL {
                entries.push(ReportEntry {
                    grouping,
                    key: GroupKey { t: None, rho: None },
                    convention,
                    variant,
                    counts: PointCounts::default(),
                    metrics: None,
                    status: EMPTY_GROUP.into(),
                });
            }
        }
    }
    ErrorReport { entries }
}

/// Report over every grouping and both variants.
pub fn full_report(rows: &[ResultRow], atm_s0: f64, mstd: MstdMode) -> ErrorReport {
    let variants = [Variant::Normal, Variant::AStarFiltered];
    let mut entries = Vec::new();
    for g in [Grouping::All, Grouping::ByT, Grouping::ByTRho] {
        entries.extend(compute_metrics(rows, g, &variants, atm_s0, mstd).entries);
    }
    ErrorReport { entries }
}

pub fn write_rows_csv<W: std::io::Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(RESULT_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| PricingError::InvalidInput(format!("write failed: {e}")))
}

pub fn read_rows_csv<R: std::io::Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    if headers.iter().ne(RESULT_COLUMNS.iter().copied()) {
        return Err(PricingError::InvalidInput(format!("unexpected results header: {headers:?}")));
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

pub const RESULT_COLUMNS: [&str; 18] = [
    "T",
    "rho",
    "rho_X",
    "rho_Y",
    "s0Y",
    "convention",
    "a_value",
    "kX",
    "kY",
    "IX",
    "IY",
    "margrabe_price",
    "mc_price",
    "mc_stderr",
    "error",
    "implied_corr",
    "excluded",
    "exclusion_reason",
];

fn csv_err(e: csv::Error) -> PricingError {
    PricingError::InvalidInput(format!("csv: {e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Skew,
    ImpliedCorr,
    Ratio,
    Difference,
    MoneynessError,
}

impl FromStr for PlotKind {
    type Err = PricingError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "skew" => Self::Skew,
            "implied_corr" => Self::ImpliedCorr,
            "ratio" => Self::Ratio,
            "difference" => Self::Difference,
            "moneyness_error" => Self::MoneynessError,
            _ => {
                return Err(PricingError::InvalidInput(format!(
                    "unknown plot kind {s:?}; expected skew, implied_corr, ratio, difference or moneyness_error"
                )))
            }
        })
    }
}

/// Tidy plot data with columns `series,x,y`.
///
/// * `skew`: one series per smile, `x = K / S0`, `y` implied vol.
/// * `implied_corr`, `ratio`, `difference`: one series per convention and
///   parameter combination, `x = S0^Y`; `y` is the implied correlation,
///   Margrabe / MC, or Margrabe - MC.
/// * `moneyness_error`: series `<convention>:<metric>` for MAE, MAPE, RMSE
///   and MaxAE across all included rows at each `S0^Y`.
pub fn emit_plot_data(results: &ExperimentResults, kind: PlotKind) -> Result<String> {
    let mut out: Vec<(String, f64, f64)> = Vec::new();
    let combo_label =
        |r: &ResultRow| format!("{} T={} rho={} rho_X={} rho_Y={}", r.convention, r.t, r.rho, r.rho_x, r.rho_y);
    match kind {
        PlotKind::Skew => {
            for s in &results.smiles {
                let series = format!("{} T={} lambda={} rho_sv={}", s.asset, s.t, s.lambda, s.rho_sv);
                out.extend(s.points.iter().filter_map(|&(m, v)| v.map(|v| (series.clone(), m, v))));
            }
        }
        PlotKind::ImpliedCorr | PlotKind::Ratio | PlotKind::Difference => {
            for r in results.rows.iter().filter(|r| r.included()) {
                let (Some(e), Some(mc)) = (r.error, r.mc_price) else { continue };
                let y = match kind {
                    PlotKind::ImpliedCorr => match r.implied_corr {
                        Some(c) => c,
                        None => continue,
                    },
                    PlotKind::Ratio => (mc + e) / mc,
                    _ => e,
                };
                out.push((combo_label(r), r.s0y, y));
            }
        }
        PlotKind::MoneynessError => {
            let mut by: BTreeMap<(ConventionKind, u64), (f64, Vec<&ResultRow>)> = BTreeMap::new();
            for r in results.rows.iter().filter(|r| r.included()) {
                by.entry((r.convention, ord(r.s0y))).or_insert_with(|| (r.s0y, Vec::new())).1.push(r);
            }
            for ((conv, _), (s0y, rows)) in &by {
                if let Some(m) = metrics_of(rows, f64::NAN, MstdMode::Signed) {
                    for (name, v) in [("MAE", m.mae), ("MAPE", m.mape), ("RMSE", m.rmse), ("MaxAE", m.max_ae)] {
                        out.push((format!("{conv}:{name}"), *s0y, v));
                    }
                }
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["series", "x", "y"]).map_err(csv_err)?;
    for (s, x, y) in out {
        w.serialize((s, x, y)).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| PricingError::InvalidInput(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| PricingError::InvalidInput(format!("csv: {e}")))
}

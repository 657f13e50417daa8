//! Subcommand implementations. Quotes print `key=value` lines on stdout.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;
use strikeconv::convention::{self, LinearConvention, ModelLimits};
use strikeconv::experiments::{self, ExperimentResults, Grouping, MstdMode, ResultRow};
use strikeconv::heston::{self, SmileObservables};
use strikeconv::margrabe;
use strikeconv::simulation::{self, McConfig};
use strikeconv::PricingError;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::{ConventionArg, ReportArgs, RunArgs, SolveArgs, SurfaceArgs, PLOT_KINDS};

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(format!("json: {e}")))?;
    write_text(path, &(text + "\n"))
}

fn observables(cfg: &RunConfig) -> Result<SmileObservables, CliError> {
    let m = &cfg.model;
    Ok(heston::measure_atm_observables(&m.heston, &m.asset_x, &m.asset_y, m.maturity, m.skew_step)?)
}

pub fn price_exchange(cfg: &RunConfig, conv: ConventionArg) -> Result<(), CliError> {
    let m = &cfg.model;
    let (name, convention) = match conv {
        ConventionArg::Atm => ("atm".to_string(), LinearConvention::own_atm()),
        ConventionArg::Lookup => ("lookup".to_string(), LinearConvention::lookup()),
        ConventionArg::Fixed(a) => (format!("a={a}"), LinearConvention::new(a)),
        ConventionArg::AStar => {
            ("a-star".to_string(), LinearConvention::new(convention::a_star_observables(&observables(cfg)?, m.rho)?))
        }
        ConventionArg::AStarBounded => (
            "a-star-bounded".to_string(),
            LinearConvention::bounded(convention::a_star_observables(&observables(cfg)?, m.rho)?),
        ),
    };
    let (x, y) = (m.asset_x.s0.ln(), m.asset_y.s0.ln());
    let (kx, ky) = convention::strikes(&convention, x, y);
    let ix = heston::leg_implied_vol(&m.heston, &m.asset_x, kx - x, m.maturity)?;
    let iy = heston::leg_implied_vol(&m.heston, &m.asset_y, ky - y, m.maturity)?;
    let gamma = margrabe::convention_gamma(ix, iy, m.rho)?;
    let price = margrabe::margrabe_price(x, y, gamma, m.maturity)?;
    println!("convention={name}");
    println!("a={}", convention.a);
    println!("kX={kx}");
    println!("kY={ky}");
    println!("KX={}", m.asset_x.s0 * (kx - x).exp());
    println!("KY={}", m.asset_y.s0 * (ky - y).exp());
    println!("IX={ix}");
    println!("IY={iy}");
    println!("gamma={gamma}");
    println!("price={price}");
    Ok(())
}

pub fn price_mc(cfg: &RunConfig) -> Result<(), CliError> {
    let m = &cfg.model;
    let model = m.two_asset();
    let est = simulation::simulate_exchange(&model, m.maturity, &cfg.mc)?;
    let (x, y) = (m.asset_x.s0.ln(), m.asset_y.s0.ln());
    println!("price={}", est.value);
    println!("stderr={}", est.stderr);
    println!("n_paths={}", est.n_paths);
    println!("n_steps={}", est.n_steps);
    println!("seed={}", est.seed);
    println!("beta={}", est.beta);
    // Implied correlation against each leg's own ATM vol.
    let ix = heston::leg_implied_vol(&m.heston, &m.asset_x, 0.0, m.maturity)?;
    let iy = heston::leg_implied_vol(&m.heston, &m.asset_y, 0.0, m.maturity)?;
    match margrabe::exchange_implied_vol(est.value, x, y, m.maturity) {
        Ok(g) => {
            let corr = margrabe::implied_correlation(g, ix, iy)?;
            println!("gamma_hat={g}");
            println!("IX={ix}");
            println!("IY={iy}");
            println!("implied_corr={}", corr.value);
        }
        // A price outside the no-arbitrage band has no implied vol.
        Err(e) => println!("implied_corr=undefined ({e})"),
    }
    Ok(())
}

pub fn surface(cfg: &RunConfig, args: &SurfaceArgs) -> Result<(), CliError> {
    let m = &cfg.model;
    if !(args.lo > 0.0 && args.lo < args.hi) || args.n == 0 {
        return Err(PricingError::InvalidInput("need 0 < lo < hi and n >= 1".into()).into());
    }
    let maturities = if args.t_list.is_empty() { vec![m.maturity] } else { args.t_list.clone() };
    let mut smiles = Vec::new();
    for &t in &maturities {
        for (name, asset) in [("X", &m.asset_x), ("Y", &m.asset_y)] {
            let ks = heston::log_strike_grid(asset.s0, args.lo, args.hi, args.n);
            smiles.push((name, heston::build_smile(&m.heston, asset, t, &ks)?));
        }
    }
    let refs: Vec<(&str, &heston::Smile)> = smiles.iter().map(|(n, s)| (*n, s)).collect();
    let path = cfg.output("smile.csv")?;
    heston::write_smile_csv(create(&path)?, &refs)?;
    let failed = smiles.iter().flat_map(|(_, s)| &s.points).filter(|p| p.implied_vol.is_err()).count();
    println!("wrote={}", path.display());
    println!("points={}", smiles.iter().map(|(_, s)| s.points.len()).sum::<usize>());
    println!("failed_points={failed}");
    Ok(())
}

pub fn convention_solve(cfg: &RunConfig, args: &SolveArgs) -> Result<(), CliError> {
    let m = &cfg.model;
    let limits = ModelLimits {
        lambda_x: m.asset_x.lambda,
        lambda_y: m.asset_y.lambda,
        rho: m.rho,
        rho_x: m.asset_x.rho_sv,
        rho_y: m.asset_y.rho_sv,
    };
    let given = [args.ix, args.iy, args.skew_x, args.skew_y];
    let (obs, source) = match given {
        [Some(ix), Some(iy), Some(sx), Some(sy)] => (
            SmileObservables { atm_level_x: ix, atm_level_y: iy, atm_skew_x: sx, atm_skew_y: sy, maturity: m.maturity },
            "given",
        ),
        [None, None, None, None] => (observables(cfg)?, "measured"),
        _ => return Err(CliError::Config("--ix, --iy, --skew-x and --skew-y go together".into())),
    };
    println!("lambda_X={}", limits.lambda_x);
    println!("lambda_Y={}", limits.lambda_y);
    println!("rho={}", limits.rho);
    println!("rho_X={}", limits.rho_x);
    println!("rho_Y={}", limits.rho_y);
    println!("observables={source}");
    println!("T={}", obs.maturity);
    if source == "measured" {
        println!("skew_step={}", m.skew_step);
    }
    println!("IX={}", obs.atm_level_x);
    println!("IY={}", obs.atm_level_y);
    println!("skew_X={}", obs.atm_skew_x);
    println!("skew_Y={}", obs.atm_skew_y);
    // Report both forms even when one of them is undefined.
    let parametric = convention::a_star_parametric(&limits);
    let observable = convention::a_star_observables(&obs, limits.rho);
    let show = |r: &Result<f64, PricingError>| match r {
        Ok(a) => a.to_string(),
        Err(_) => "undefined".to_string(),
    };
    println!("a_star_parametric={}", show(&parametric));
    println!("a_star_observables={}", show(&observable));
    println!("a_star_bounded={}", show(&observable.clone().map(convention::bound_a)));
    parametric?;
    observable?;
    Ok(())
}

#[derive(Serialize)]
struct Metadata<'a> {
    version: &'a str,
    kind: &'a str,
    seed: u64,
    rng: &'a str,
    streams: &'a str,
    mc: McConfig,
    rows: usize,
}

const STREAMS: &str = "path i draws from stream i of a ChaCha8 generator seeded with `seed`; \
every (T, rho, rho_X, rho_Y) combination reuses the same streams across S0Y";

fn write_outputs(
    cfg: &RunConfig,
    kind: &str,
    mc: McConfig,
    res: &ExperimentResults,
    atm_s0: f64,
    mstd: MstdMode,
) -> Result<(), CliError> {
    let results = cfg.output("results.csv")?;
    experiments::write_rows_csv(create(&results)?, &res.rows)?;
    let report = experiments::full_report(&res.rows, atm_s0, mstd);
    write_json(&cfg.output("report.json")?, &report)?;
    let meta = Metadata {
        version: env!("CARGO_PKG_VERSION"),
        kind,
        seed: mc.seed,
        rng: "ChaCha8",
        streams: STREAMS,
        mc,
        rows: res.rows.len(),
    };
    write_json(&cfg.output("metadata.json")?, &meta)?;
    for (name, k) in PLOT_KINDS {
        write_text(&cfg.output(&format!("plot_{name}.csv"))?, &experiments::emit_plot_data(res, k)?)?;
    }
    println!("wrote={}", results.display());
    println!("rows={}", res.rows.len());
    println!("included={}", res.rows.iter().filter(|r| r.included()).count());
    print_summary(&report);
    Ok(())
}

pub fn experiment_run(cfg: &RunConfig, args: &RunArgs) -> Result<(), CliError> {
    if let Some(case) = args.case_id {
        if args.dry_run {
            return Err(CliError::Config("--dry-run applies to the sweep, not to --case".into()));
        }
        let r = experiments::run_test_case(case, &cfg.mc, cfg.model.skew_step)?;
        println!("case={case}");
        println!("a_star={}", r.a_star);
        return write_outputs(cfg, &format!("test_case_{case}"), cfg.mc, &r.results, r.model.asset_x.s0, args.mstd);
    }
    let grid = cfg.grid_or_default();
    if args.dry_run {
        let c = experiments::dry_run(&grid)?;
        println!("triples={}", c.triples);
        println!("invalid_triples={}", c.invalid_triples);
        println!("invalid_fraction={}", c.invalid_fraction());
        println!("invalid_percent={:.1}", 100.0 * c.invalid_fraction());
        println!("points={}", c.points);
        println!("invalid_points={}", c.invalid_points);
        println!("rows={}", c.rows);
        return Ok(());
    }
    let res = experiments::run_grid(&grid)?;
    write_outputs(cfg, "grid", grid.mc, &res, grid.s0x, args.mstd)
}

fn print_summary(report: &experiments::ErrorReport) {
    for e in report.entries.iter().filter(|e| e.grouping == Grouping::All) {
        let variant =
            serde_json::to_value(e.variant).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        let mut line = format!(
            "summary convention={} variant={variant} status={} included={} total={}",
            e.convention, e.status, e.counts.included, e.counts.total
        );
        if let Some(m) = e.metrics {
            line += &format!(" mae={} mape={} rmse={} max_ae={} mstd={}", m.mae, m.mape, m.rmse, m.max_ae, m.mstd);
            if let Some(a) = m.atm_error {
                line += &format!(" atm_error={a}");
            }
        }
        println!("{line}");
    }
}

pub fn experiment_report(cfg: &RunConfig, args: &ReportArgs) -> Result<(), CliError> {
    let file =
        File::open(&args.input).map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.input.display())))?;
    let rows: Vec<ResultRow> = experiments::read_rows_csv(file)?;
    let report = experiments::full_report(&rows, args.atm_s0, args.mstd);
    let path = cfg.output("report.json")?;
    write_json(&path, &report)?;
    println!("wrote={}", path.display());
    println!("rows={}", rows.len());
    print_summary(&report);
    Ok(())
}

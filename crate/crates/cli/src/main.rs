//! `strikeconv` command-line front end.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use strikeconv::experiments::{MstdMode, PlotKind};
use strikeconv::simulation::Beta;

use crate::config::{ModelConfig, RunConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "strikeconv", version, about = "Exchange options priced with smile-aware strike conventions")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed of every Monte Carlo stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available cores). Output does not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory for written files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Quote an exchange option.
    #[command(subcommand)]
    Price(PriceCommand),
    /// Write Heston implied-vol smiles of both legs to smile.csv.
    Surface(SurfaceArgs),
    /// Optimal convention coefficient.
    #[command(subcommand)]
    Convention(ConventionCommand),
    /// Test cases and parameter sweeps.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Debug, Subcommand)]
enum PriceCommand {
    /// Margrabe price with smile vols picked by a strike convention.
    Exchange(ExchangeArgs),
    /// Monte Carlo benchmark price.
    Mc(McQuoteArgs),
}

#[derive(Debug, Subcommand)]
enum ConventionCommand {
    /// Print a* from model parameters and from smile observables.
    Solve(SolveArgs),
}

#[derive(Debug, Subcommand)]
enum ExperimentCommand {
    /// Run a test case or the parameter sweep; writes results.csv,
    /// report.json, metadata.json and plot_<kind>.csv.
    Run(RunArgs),
    /// Recompute report.json from an existing results CSV.
    Report(ReportArgs),
}

/// Model overrides shared by the quoting commands.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// Start from built-in test case 1 or 2.
    #[arg(long = "case", value_parser = clap::value_parser!(u8).range(1..=2))]
    pub case_id: Option<u8>,
    #[arg(long)]
    pub s0x: Option<f64>,
    #[arg(long)]
    pub s0y: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_x: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_y: Option<f64>,
    /// Correlation of the two asset drivers.
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    /// Correlation of X with the variance driver.
    #[arg(long, allow_hyphen_values = true)]
    pub rho_x: Option<f64>,
    /// Correlation of Y with the variance driver.
    #[arg(long, allow_hyphen_values = true)]
    pub rho_y: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub sigma0: Option<f64>,
    #[arg(long)]
    pub maturity: Option<f64>,
    /// Log-strike step of the ATM skew measurement.
    #[arg(long)]
    pub skew_step: Option<f64>,
}

impl ModelArgs {
    fn apply(&self, m: &mut ModelConfig) -> Result<(), CliError> {
        if let Some(c) = self.case_id {
            *m = ModelConfig::test_case(c)?;
        }
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut m.asset_x.s0, self.s0x);
        set(&mut m.asset_y.s0, self.s0y);
        set(&mut m.asset_x.lambda, self.lambda_x);
        set(&mut m.asset_y.lambda, self.lambda_y);
        set(&mut m.rho, self.rho);
        set(&mut m.asset_x.rho_sv, self.rho_x);
        set(&mut m.asset_y.rho_sv, self.rho_y);
        set(&mut m.heston.kappa, self.kappa);
        set(&mut m.heston.theta, self.theta);
        set(&mut m.heston.nu, self.nu);
        set(&mut m.heston.sigma0, self.sigma0);
        set(&mut m.maturity, self.maturity);
        set(&mut m.skew_step, self.skew_step);
        Ok(())
    }
}

/// Monte Carlo overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct McArgs {
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub steps_per_year: Option<usize>,
    /// Disable the constant-volatility control variate.
    #[arg(long)]
    pub no_control_variate: bool,
    /// Control-variate coefficient: `estimated` or a number.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_beta)]
    pub beta: Option<Beta>,
}

impl McArgs {
    fn apply(&self, mc: &mut strikeconv::simulation::McConfig) {
        if let Some(n) = self.paths {
            mc.n_paths = n;
        }
        if let Some(n) = self.steps_per_year {
            mc.steps_per_year = n;
        }
        if self.no_control_variate {
            mc.use_control_variate = false;
        }
        if let Some(b) = self.beta {
            mc.beta = b;
        }
    }
}

fn parse_beta(s: &str) -> Result<Beta, String> {
    if s == "estimated" {
        return Ok(Beta::Estimated);
    }
    s.parse::<f64>().map(Beta::Fixed).map_err(|_| format!("expected `estimated` or a number, got {s:?}"))
}

/// Strike convention of a quote.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConventionArg {
    Atm,
    Lookup,
    Fixed(f64),
    AStar,
    AStarBounded,
}

fn parse_convention(s: &str) -> Result<ConventionArg, String> {
    Ok(match s {
        "atm" => ConventionArg::Atm,
        "lookup" => ConventionArg::Lookup,
        "a-star" => ConventionArg::AStar,
        "a-star-bounded" => ConventionArg::AStarBounded,
        _ => match s.strip_prefix("a=").map(str::parse::<f64>) {
            Some(Ok(a)) if a.is_finite() => ConventionArg::Fixed(a),
            _ => return Err(format!("expected atm, lookup, a=<value>, a-star or a-star-bounded, got {s:?}")),
        },
    })
}

#[derive(Debug, Args)]
pub struct ExchangeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "atm", value_parser = parse_convention)]
    pub convention: ConventionArg,
}

#[derive(Debug, Args)]
pub struct McQuoteArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub mc: McArgs,
}

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Maturities, comma separated (default: the model maturity).
    #[arg(long, value_delimiter = ',')]
    pub t_list: Vec<f64>,
    /// Lowest strike as a fraction of spot.
    #[arg(long, default_value_t = 0.7)]
    pub lo: f64,
    /// Highest strike as a fraction of spot.
    #[arg(long, default_value_t = 1.3)]
    pub hi: f64,
    /// Strikes per smile.
    #[arg(long, default_value_t = 41)]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// ATM vol of X; with --iy, --skew-x and --skew-y replaces the measured smiles.
    #[arg(long)]
    pub ix: Option<f64>,
    #[arg(long)]
    pub iy: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub skew_x: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub skew_y: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run built-in test case 1 or 2 instead of the sweep.
    #[arg(long = "case", value_parser = clap::value_parser!(u8).range(1..=2))]
    pub case_id: Option<u8>,
    /// Print point counts without simulating.
    #[arg(long)]
    pub dry_run: bool,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub t_list: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub s0y_list: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub rho_list: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub rho_x_list: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub rho_y_list: Vec<f64>,
    #[command(flatten)]
    pub mc: McArgs,
    #[arg(long, default_value = "signed", value_parser = parse_mstd)]
    pub mstd: MstdMode,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Results CSV written by `experiment run`.
    #[arg(long)]
    pub input: PathBuf,
    /// Spot of X; rows with S0Y equal to it feed the ATM error.
    #[arg(long, default_value_t = 100.0)]
    pub atm_s0: f64,
    #[arg(long, default_value = "signed", value_parser = parse_mstd)]
    pub mstd: MstdMode,
}

fn parse_mstd(s: &str) -> Result<MstdMode, String> {
    match s {
        "signed" => Ok(MstdMode::Signed),
        "absolute" => Ok(MstdMode::Absolute),
        _ => Err(format!("expected signed or absolute, got {s:?}")),
    }
}

pub const PLOT_KINDS: [(&str, PlotKind); 5] = [
    ("skew", PlotKind::Skew),
    ("implied_corr", PlotKind::ImpliedCorr),
    ("ratio", PlotKind::Ratio),
    ("difference", PlotKind::Difference),
    ("moneyness_error", PlotKind::MoneynessError),
];

/// Folds the file, subcommand flags and global flags into one config.
fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    match &cli.command {
        Some(Command::Price(PriceCommand::Exchange(a))) => a.model.apply(&mut cfg.model)?,
        Some(Command::Price(PriceCommand::Mc(a))) => {
            a.model.apply(&mut cfg.model)?;
            a.mc.apply(&mut cfg.mc);
        }
        Some(Command::Surface(a)) => a.model.apply(&mut cfg.model)?,
        Some(Command::Convention(ConventionCommand::Solve(a))) => a.model.apply(&mut cfg.model)?,
        Some(Command::Experiment(ExperimentCommand::Run(a))) => {
            if a.case_id.is_some() {
                a.mc.apply(&mut cfg.mc);
            } else {
                let mut grid = cfg.grid_or_default();
                a.mc.apply(&mut grid.mc);
                for (slot, list) in [
                    (&mut grid.t_list, &a.t_list),
                    (&mut grid.s0y_list, &a.s0y_list),
                    (&mut grid.rho_list, &a.rho_list),
                    (&mut grid.rho_x_list, &a.rho_x_list),
                    (&mut grid.rho_y_list, &a.rho_y_list),
                ] {
                    if !list.is_empty() {
                        *slot = list.clone();
                    }
                }
                cfg.grid = Some(grid);
            }
        }
        Some(Command::Experiment(ExperimentCommand::Report(_))) | None => {}
    }
    if let Some(seed) = cli.seed {
        cfg.mc.seed = seed;
        if let Some(g) = &mut cfg.grid {
            g.mc.seed = seed;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = effective_config(&cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {jobs} workers: {e}")))?;
    }
    match cli.command {
        Some(Command::Price(PriceCommand::Exchange(a))) => commands::price_exchange(&cfg, a.convention),
        Some(Command::Price(PriceCommand::Mc(_))) => commands::price_mc(&cfg),
        Some(Command::Surface(a)) => commands::surface(&cfg, &a),
        Some(Command::Convention(ConventionCommand::Solve(a))) => commands::convention_solve(&cfg, &a),
        Some(Command::Experiment(ExperimentCommand::Run(a))) => commands::experiment_run(&cfg, &a),
        Some(Command::Experiment(ExperimentCommand::Report(a))) => commands::experiment_report(&cfg, &a),
        None => Err(CliError::Config("no subcommand given; see --help".into())),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convention_flags() {
        assert_eq!(parse_convention("atm").unwrap(), ConventionArg::Atm);
        assert_eq!(parse_convention("a=-0.5").unwrap(), ConventionArg::Fixed(-0.5));
        assert_eq!(parse_convention("a-star-bounded").unwrap(), ConventionArg::AStarBounded);
        assert!(parse_convention("a=nan").is_err());
        assert!(parse_convention("median").is_err());
    }

    #[test]
    fn beta_flag() {
        assert_eq!(parse_beta("estimated").unwrap(), Beta::Estimated);
        assert_eq!(parse_beta("1").unwrap(), Beta::Fixed(1.0));
        assert!(parse_beta("x").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}

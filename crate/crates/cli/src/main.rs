//! `armadesign`: simulate, fit, score and compare experimental designs for
//! controlled (V)ARMA outcome series.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod designs_arg;
#[cfg(test)]
mod tests;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "armadesign", version, about = "Design and analysis of temporal A/B experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a panel (CSV) from a model or the dispatch simulator.
    Simulate(SimulateArgs),
    /// Fit a controlled ARMA/VARMA to a panel CSV.
    Fit(FitArgs),
    /// Efficiency indicators and asymptotic MSEs of AD, UR and AT for a fit.
    Indicators(IndicatorsArgs),
    /// Optimal design for a fit: `co` (Markov) or `rl` (q-dependent policy).
    Design(DesignArgs),
    /// Monte Carlo comparison of designs.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Model JSON (ARMA or VARMA).
    #[arg(long, conflicts_with_all = ["dispatch", "days"])]
    model: Option<PathBuf>,
    /// Dispatch simulator config JSON; fields left out take their defaults.
    #[arg(long)]
    dispatch: Option<PathBuf>,
    /// Design JSON or shorthand (ur, at, ad:TAU, switchback:M, markov:A[:B]).
    #[arg(long)]
    design: String,
    /// Intervals to simulate (model only).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), conflicts_with = "dispatch")]
    horizon: Option<u64>,
    /// Days to simulate (dispatch only).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    days: Option<u64>,
    #[arg(long, env = "ARMADESIGN_SEED")]
    seed: u64,
    /// Interval length, e.g. 30min; sets the peak-hour dummy of models with C.
    #[arg(long, default_value = "30min")]
    dt_label: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Aic,
    Bic,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum KindArg {
    /// ARMA for one outcome column without exogenous columns, VARMA otherwise.
    #[default]
    Auto,
    Arma,
    Varma,
}

#[derive(Args)]
struct OrderArgs {
    #[arg(long, requires = "q", conflicts_with = "auto_order")]
    p: Option<usize>,
    #[arg(long, requires = "p", conflicts_with = "auto_order")]
    q: Option<usize>,
    /// Choose (p, q) by information criterion over 0..=pmax x 0..=qmax.
    #[arg(long)]
    auto_order: bool,
    #[arg(long, default_value_t = 3)]
    pmax: usize,
    #[arg(long, default_value_t = 3)]
    qmax: usize,
    #[arg(long, value_enum, default_value = "bic")]
    criterion: CriterionArg,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    order: OrderArgs,
    #[arg(long, value_enum, default_value = "auto")]
    kind: KindArg,
    /// Interval length of the panel, e.g. 30min.
    #[arg(long, default_value = "30min")]
    dt_label: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IndicatorsArgs {
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignMethod {
    Co,
    Rl,
}

#[derive(Args)]
struct DesignArgs {
    #[arg(value_enum)]
    method: DesignMethod,
    #[arg(long)]
    fit: PathBuf,
    /// Discount factor for value iteration.
    #[arg(long, default_value_t = armadesign::optimal::DEFAULT_GAMMA)]
    gamma: f64,
    /// Value-iteration stopping tolerance.
    #[arg(long, default_value_t = armadesign::optimal::DEFAULT_TOL)]
    tol: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[group(id = "generator", required = true, multiple = false, args = ["model", "bootstrap_fit", "dispatch"])]
struct CompareArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// Fit JSON to bootstrap from.
    #[arg(long)]
    bootstrap_fit: Option<PathBuf>,
    /// Effect injected into every outcome coordinate of the bootstrap.
    #[arg(long, default_value_t = 0.0, requires = "bootstrap_fit")]
    b_inject: f64,
    #[arg(long)]
    dispatch: Option<PathBuf>,
    /// Comma-separated designs: JSON files or shorthands.
    #[arg(long, value_delimiter = ',', required = true)]
    designs: Vec<String>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    reps: u64,
    /// Intervals per replicate, or days for the dispatch simulator.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    horizon: u64,
    #[arg(long, env = "ARMADESIGN_SEED")]
    seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
    #[command(flatten)]
    order: OrderArgs,
    /// Days per constant-treatment oracle run (dispatch only).
    #[arg(long, default_value_t = 2000)]
    oracle_days: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Failure classes: bad arguments and input schemas exit 2, computation failures exit 1.
#[derive(Debug)]
enum Failure {
    Parse(clap::Error),
    Usage(String),
    Compute(anyhow::Error),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Parse(e) => e.exit_code() as u8,
            Failure::Usage(_) => 2,
            Failure::Compute(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Parse(e) => write!(f, "{e}"),
            Failure::Usage(msg) => write!(f, "{msg}"),
            Failure::Compute(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<armadesign::Error>() {
            Some(armadesign::Error::Schema(_)) => Failure::Usage(format!("{e:#}")),
            _ => Failure::Compute(e),
        }
    }
}

impl From<armadesign::Error> for Failure {
    fn from(e: armadesign::Error) -> Self {
        Failure::from(anyhow::Error::new(e))
    }
}

/// Parses `args` (program name first) and runs the subcommand.
fn execute<I, T>(args: I) -> Result<(), Failure>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(Failure::Parse)?;
    match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Indicators(a) => commands::indicators(a),
        Command::Design(a) => commands::design(a),
        Command::Compare(a) => commands::compare(a),
    }
}

fn main() -> ExitCode {
    match execute(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Parse(e)) => {
            let code = e.exit_code() as u8;
            let _ = e.print();
            ExitCode::from(code)
        }
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}

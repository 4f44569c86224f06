use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod output;
mod verify;

/// Derrida-Retaux recursive systems: exact laws, free-energy brackets,
/// p-derivatives and verification suites.
#[derive(Debug, Parser)]
#[command(name = "drsys", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Iterate the law of X_n and write per-generation CSVs plus a moments summary.
    Iterate(IterateArgs),
    /// Free-energy brackets L_N <= F <= U_N and the series partial sums.
    FreeEnergy(FreeEnergyArgs),
    /// Exact p-derivatives of P(X_n = 0) and of the series terms.
    Derivative(DerivativeArgs),
    /// Run verification suites and report pass/fail per check.
    Verify(VerifyArgs),
    /// Slope d/dp E(X_n) along a mixture of two critical laws.
    Question5(Question5Args),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    Float,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Model spec JSON file.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Arithmetic mode; exact needs a finite star law and rational p.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Output path (a directory for `iterate`); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Debug, Args)]
pub struct IterateArgs {
    #[command(flatten)]
    common: Common,
    /// Number of generations.
    #[arg(long)]
    n: usize,
    /// Largest value kept in float mode.
    #[arg(long)]
    cap: Option<usize>,
    /// lump_at_cap, lump_at_zero or reject.
    #[arg(long)]
    tail_policy: Option<drsys::TailPolicy>,
}

#[derive(Debug, Args)]
pub struct FreeEnergyArgs {
    #[command(flatten)]
    common: Common,
    /// Largest N.
    #[arg(long = "N")]
    big_n: usize,
    /// Sweep p over `a:b:steps` (steps points, both ends included).
    #[arg(long)]
    p_grid: Option<String>,
}

#[derive(Debug, Args)]
pub struct DerivativeArgs {
    #[command(flatten)]
    common: Common,
    /// Largest generation.
    #[arg(long)]
    n: usize,
    /// Largest derivative order.
    #[arg(long)]
    k: usize,
    /// Point of evaluation; defaults to the spec's p.
    #[arg(long)]
    p0: Option<String>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// all, model, engine, polymode, observables, tree, delta or golden.
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 2)]
    m: u32,
    /// Tree depth for the tree suite.
    #[arg(long, default_value_t = 2)]
    n: u32,
    /// Derivative order for the tree suite.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Horizon M for the delta suite.
    #[arg(long = "M", default_value_t = 6)]
    big_m: usize,
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Golden values file replacing the built-in one.
    #[arg(long)]
    golden: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Question5Args {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 2)]
    m: u32,
    /// First law as `k:w,k:w,...`.
    #[arg(long)]
    mu: String,
    /// Second law as `k:w,...`; omit to generate one from `--lambda-support`.
    #[arg(long)]
    lambda: Option<String>,
    /// Support `k,k,...` for a generated critical law (uniform weights).
    #[arg(long)]
    lambda_support: Option<String>,
    /// Largest generation.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value = "1/10:9/10:5")]
    p_grid: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Iterate(a) => commands::iterate(&a).map(|_| true),
        Command::FreeEnergy(a) => commands::free_energy(&a).map(|_| true),
        Command::Derivative(a) => commands::derivative(&a).map(|_| true),
        Command::Verify(a) => verify::run(&a),
        Command::Question5(a) => commands::question5(&a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

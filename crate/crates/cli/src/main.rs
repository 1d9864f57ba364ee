//! `polyattn`: generate datasets, check lemmas and run separation
//! experiments.
//!
//! Exit codes: 0 pass, 1 internal error, 2 invalid input or failed regime
//! gate, 3 a checked clause failed (the report is still written).

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use polyattn_core::verify::Regime;
use polyattn_core::Label;

/// Bad input from the user: exit code 2.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Parser, Debug)]
#[command(
    name = "polyattn",
    version,
    about = "Polynomial attention separation experiments"
)]
struct Cli {
    /// Worker threads for Monte Carlo trials (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a dataset instance as JSON.
    GenDataset(GenArgs),
    /// Check one lemma on an instance and write a JSON report.
    CheckLemma(CheckArgs),
    /// Run a separation experiment from a config file.
    RunSeparation(SeparationArgs),
    /// Tabulate rate_F_positive over a range of β.
    SweepBeta(SweepArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Score,
    Selfattn,
}

/// Self-attention instance parameters. `j3` is 1-based.
#[derive(Args, Debug, Clone)]
pub struct InstanceArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    j3: Option<usize>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    b: f64,
    #[arg(long, default_value_t = 0.5)]
    c: f64,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    label: Label,
    #[command(flatten)]
    inst: InstanceArgs,
    /// Needed whenever something is sampled.
    #[arg(long)]
    seed: Option<u64>,
    /// Output JSON path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the dense matrix as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[arg(long)]
    id: String,
    /// Instance JSON written by gen-dataset, instead of parameters.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[command(flatten)]
    inst: InstanceArgs,
    #[arg(long)]
    beta: f64,
    /// Regime for p4-* (inferred from β when absent).
    #[arg(long)]
    regime: Option<Regime>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    c0: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    tau_sqrt_log: bool,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    log_base: Option<f64>,
    #[arg(long)]
    rate_threshold: Option<f64>,
    /// Report path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SeparationArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config's `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// `start:stop:count`; overrides the config's sweep.
    #[arg(long)]
    sweep_beta: Option<String>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sweep_beta: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// CSV path (defaults to the config's sweep_csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Invalid>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<polyattn_core::Error>() {
            return if e.is_input_error() { 2 } else { 1 };
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("POLYATTN_LOG", "warn")).init();
    let cli = Cli::parse();

    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    }

    let result = match cli.command {
        Command::GenDataset(a) => commands::gen_dataset(a),
        Command::CheckLemma(a) => commands::check_lemma(a),
        Command::RunSeparation(a) => commands::run_separation(a),
        Command::SweepBeta(a) => commands::sweep_beta(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

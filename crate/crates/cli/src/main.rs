//! `mtherm`: command-line front end for the kinetics and thermodynamics engine.

mod commands;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "mtherm", version, about = "Markov kinetics on energy landscapes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Gibbs distribution, equilibrium constants and residence times.
    Gibbs(GibbsArgs),
    /// Evolve a density and print the trajectory with its entropy balance.
    Simulate(SimulateArgs),
    /// Check that free energy never increases along a trajectory.
    Audit(AuditArgs),
    /// Sample jump paths and compare them with the master equation.
    Sample(SampleArgs),
    /// Lower-bound certificate for the transition kernel.
    Stability(StabilityArgs),
    /// Pushforward iterates and exactness probe for a finite map.
    Transfer(TransferArgs),
}

#[derive(Args, Debug)]
struct GibbsArgs {
    landscape: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum EngineChoice {
    Expm,
    Rk,
    Both,
}

#[derive(Args, Debug)]
struct GridArgs {
    /// uniform | point:<label> | file:<path> | counts:<path>
    #[arg(long, default_value = "uniform")]
    p0: String,
    #[arg(long, default_value_t = 10.0)]
    t_max: f64,
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    /// Explicit time grid (JSON array or comma/whitespace separated); overrides --t-max/--dt.
    #[arg(long)]
    grid: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    landscape: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_enum, default_value = "expm")]
    engine: EngineChoice,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    landscape: PathBuf,
    /// Trajectory CSV as written by `simulate`; simulated when absent.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_enum, default_value = "expm")]
    engine: EngineChoice,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    landscape: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StabilityArgs {
    landscape: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    t0: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TransferArgs {
    map: PathBuf,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// uniform | point:<label> | file:<path> | counts:<path>
    #[arg(long, default_value = "uniform")]
    p0: String,
    /// Probe set, e.g. `A=0,1`.
    #[arg(long = "set")]
    set: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failed run: exit code plus a one-line message.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<mtherm_core::Error> for Failure {
    fn from(e: mtherm_core::Error) -> Self {
        Failure {
            code: if e.is_numerical() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("mtherm: {}", first.trim_start_matches("error: "));
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Gibbs(a) => commands::gibbs(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Audit(a) => commands::audit(&a),
        Command::Sample(a) => commands::sample(&a),
        Command::Stability(a) => commands::stability(&a),
        Command::Transfer(a) => commands::transfer(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("mtherm: {}", f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}

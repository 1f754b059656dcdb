//! `fintail` — certify, simulate and compare finite-tail MPC configurations.
//!
//! Exit codes: 0 certified/verified, 1 guarantee violated or not certified,
//! 2 usage or configuration error, 3 solver failure.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fintail::config::RunConfig;

#[derive(Parser)]
#[command(name = "fintail", version, about = "Finite-tail cost MPC: certification and closed-loop checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the feedback constants and evaluate the horizon certificate
    Certify(RunArgs),
    /// Run the closed loop and check the certified guarantees
    Simulate(RunArgs),
    /// Tabulate horizon bounds with and without the finite tail over an M-sweep
    Compare(RunArgs),
    /// Batch closed-loop runs over (N, M) pairs and initial states
    Sweep(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Overrides the sampling seed of the config
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory of the config
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum Failure {
    /// A check failed or nothing was certified.
    Violated(String),
    Usage(String),
    Solver(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Violated(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Solver(_) => 3,
        }
    }
}

impl From<fintail::Error> for Failure {
    fn from(e: fintail::Error) -> Self {
        use fintail::Error as E;
        match e {
            E::Certification(_) => Failure::Violated(e.to_string()),
            E::Rollout { .. } | E::Domain(_) | E::Linearization(_) | E::LinearProgram(_) => {
                Failure::Solver(e.to_string())
            }
            _ => Failure::Usage(e.to_string()),
        }
    }
}

fn load(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.certify.seed = seed;
    }
    if let Some(out) = &args.out {
        config.output.dir.clone_from(out);
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, run): (&RunArgs, fn(&RunConfig) -> Result<(), Failure>) = match &cli.command {
        Command::Certify(a) => (a, commands::certify),
        Command::Simulate(a) => (a, commands::simulate),
        Command::Compare(a) => (a, commands::compare),
        Command::Sweep(a) => (a, commands::sweep),
    };
    match load(args).and_then(|config| run(&config)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let message = match &failure {
                Failure::Violated(m) => format!("not verified: {m}"),
                Failure::Usage(m) => format!("error: {m}"),
                Failure::Solver(m) => format!("solver failure: {m}"),
            };
            eprintln!("{message}");
            ExitCode::from(failure.exit_code())
        }
    }
}

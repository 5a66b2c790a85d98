//! `lpsim`: seeded queueing experiments for size-based scheduling with
//! limited preemption.
//!
//! Exit codes: 0 success, 1 configuration error, 2 tolerance failure
//! (`validate`), 3 runtime error.

mod commands;
mod config;
mod output;
mod workload_io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;
use config::Overrides;

#[derive(Parser)]
#[command(
    name = "lpsim",
    version,
    about = "Simulation and closed-form analysis of predicted-size scheduling \
             with limited preemption"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured simulation and write per-job and summary outputs.
    Simulate(SimulateArgs),
    /// Run the simulation over the configured (lambda, c) grid.
    Sweep(RunArgs),
    /// Compare simulated mean response time against the closed form.
    Validate(RunArgs),
    /// Run the prediction-refinement loop over a seeded ensemble.
    Refine(RunArgs),
    /// Evaluate the closed-form mean response time on a (lambda, c) grid.
    Analyze(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the TOML experiment configuration.
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the Poisson arrival rate.
    #[arg(long)]
    rate: Option<f64>,
    /// Override the preemption constant.
    #[arg(long)]
    c: Option<f64>,
    /// Override the replication count.
    #[arg(long)]
    replications: Option<u64>,
    /// Override the warmup fraction.
    #[arg(long)]
    warmup_fraction: Option<f64>,
    /// Override the output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Replay a workload from CSV instead of generating one.
    #[arg(long)]
    workload: Option<PathBuf>,
    /// Export the workload actually used to CSV for later replay.
    #[arg(long)]
    export_workload: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            rate: self.rate,
            c: self.c,
            replications: self.replications,
            warmup_fraction: self.warmup_fraction,
            out_dir: self.out_dir.clone(),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(args) => commands::cmd_simulate(
            &args.run.config,
            &args.run.overrides(),
            args.workload.as_deref(),
            args.export_workload.as_deref(),
        ),
        Command::Sweep(args) => commands::cmd_sweep(&args.config, &args.overrides()),
        Command::Validate(args) => commands::cmd_validate(&args.config, &args.overrides()),
        Command::Refine(args) => commands::cmd_refine(&args.config, &args.overrides()),
        Command::Analyze(args) => commands::cmd_analyze(&args.config, &args.overrides()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are not errors
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

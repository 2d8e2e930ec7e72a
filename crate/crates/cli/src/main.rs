use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vosa_core::systolic::SimMode;

mod commands;
mod config;
mod fail;
mod output;

use commands::Run;
use config::RunConfig;
use fail::Result;

/// Voltage-overscaling planner for systolic-array neural network inference.
#[derive(Parser)]
#[command(name = "vosa", version)]
struct Cli {
    /// JSON run configuration; defaults apply to absent fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config simulation mode.
    #[arg(long, global = true)]
    mode: Option<SimMode>,
    /// Also write solver wall times to `timings.csv`.
    #[arg(long, global = true)]
    timings: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the per-voltage error model from the variance table.
    Calibrate,
    /// Per-neuron error sensitivity.
    Sensitivity,
    /// Solve the voltage assignment for one MSE bound.
    Assign {
        /// Relative MSE increase bound; the first config bound when absent.
        #[arg(long)]
        mse_ub: Option<f64>,
    },
    /// Simulate inference under an assignment.
    Simulate {
        #[arg(long)]
        mse_ub: Option<f64>,
        /// Existing assignment CSV instead of solving one.
        #[arg(long)]
        assignment: Option<PathBuf>,
    },
    /// Assign and simulate every configured MSE bound.
    Sweep,
    /// Threshold-voltage drift and delay report.
    Aging {
        /// Overrides the configured stress time.
        #[arg(long)]
        years: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let (mut cfg, base) = match &cli.config {
        Some(p) => (
            RunConfig::load(p)?,
            p.parent().map(PathBuf::from).unwrap_or_default(),
        ),
        None => (RunConfig::default(), PathBuf::new()),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = cli.mode {
        cfg.mode = mode;
    }
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.out_dir.as_ref().map(|p| config::resolve(&base, p)))
        .unwrap_or_else(|| PathBuf::from("out"));
    let first_bound = cfg.mse_ub.first().copied();
    let run = Run::new(cfg, base, out_dir, cli.timings)?;
    let bound = |b: Option<f64>| {
        b.or(first_bound)
            .ok_or_else(|| fail::Failure::config("no --mse-ub given and config mse_ub is empty"))
    };
    match cli.command {
        Command::Calibrate => commands::calibrate(&run),
        Command::Sensitivity => commands::sensitivity(&run),
        Command::Assign { mse_ub } => commands::assign(&run, bound(mse_ub)?),
        Command::Simulate { mse_ub, assignment } => {
            commands::simulate(&run, bound(mse_ub)?, assignment.as_deref())
        }
        Command::Sweep => commands::sweep(&run),
        Command::Aging { years } => commands::aging(&run, years),
    }?;
    log::info!("outputs written to {}", run.out.path().display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit as u8)
        }
    }
}

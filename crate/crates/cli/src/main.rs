mod commands;
mod config;
mod figures;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use sbd_core::Error;

#[derive(Parser)]
#[command(name = "sbd", version, about = "Spatial birth-death wireless network experiments")]
struct Cli {
    /// Experiment configuration (key = value with [sections]); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed, overriding [simulation] seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel replications (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write metrics, events, trajectory and snapshots.
    Simulate,
    /// Sweep the steady-state density predictions over a grid of arrival intensities.
    Heuristics,
    /// Palm statistics of snapshot files.
    Stats {
        /// Glob pattern of snapshot CSV files.
        #[arg(long)]
        snapshots: String,
    },
    /// Reproduce the data behind one of the standard plots.
    Figures {
        #[arg(value_parser = ["fig2", "fig3", "fig5-6", "fig8", "fig9"])]
        figure: String,
        /// Multiplier on horizons and replication counts.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Run the tessellated upper-bound chain, its fluid limit and the coupling check.
    Chain,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numerical(_) => 3,
        Error::State(_) => 4,
        Error::Io(_) => 1,
        _ => 2,
    }
}

fn run(cli: Cli) -> sbd_core::Result<()> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Configuration(format!("thread pool: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.simulation.seed = seed;
    }
    match cli.command {
        Command::Simulate => commands::simulate(&cfg, &cli.out),
        Command::Heuristics => commands::heuristics(&cfg, &cli.out),
        Command::Stats { snapshots } => commands::stats(&cfg, &snapshots, &cli.out),
        Command::Figures { figure, scale } => figures::run(&figure, &cfg, scale, &cli.out),
        Command::Chain => commands::chain(&cfg, &cli.out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sbd: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

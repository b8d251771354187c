//! Command-line entry point for the transport experiment pipelines.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rte_core::config::RunConfig;
use rte_core::pipeline;

#[derive(Parser)]
#[command(
    name = "rte",
    version,
    about = "Discrete-ordinates transport solver with energy, weighted-inequality and \
             stability-ratio diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for CSV/JSON artifacts.
    #[arg(long, default_value = "rte-out", global = true)]
    out: PathBuf,

    /// Override the random seed of ensembles and sweeps.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for ensemble experiments (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the forward initial/boundary value problem.
    Forward,
    /// Solve the linearized source problem and fit the outflow bound.
    Linearized,
    /// Evaluate the weighted inequalities on the cutoff auxiliary field.
    CarlemanCheck,
    /// Fit the a priori energy bound and the identity residual at two
    /// time steps.
    EnergyCheck,
    /// Run a perturbation ensemble and summarize the stability ratios.
    StabilityEnsemble,
    /// Sweep source amplitudes and fit the stability exponent.
    HolderSweep,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("warning: could not set thread count: {e}");
        }
    }

    let config_path = match &cli.config {
        Some(p) => p.clone(),
        None => {
            eprintln!("error: --config <path> is required");
            return ExitCode::from(2);
        }
    };
    let config = match RunConfig::parse_file(&config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    let sub = match cli.command {
        Command::Forward => pipeline::Subcommand::Forward,
        Command::Linearized => pipeline::Subcommand::Linearized,
        Command::CarlemanCheck => pipeline::Subcommand::CarlemanCheck,
        Command::EnergyCheck => pipeline::Subcommand::EnergyCheck,
        Command::StabilityEnsemble => pipeline::Subcommand::StabilityEnsemble,
        Command::HolderSweep => pipeline::Subcommand::HolderSweep,
    };

    match pipeline::run(sub, &config, &cli.out, cli.seed) {
        Ok(manifest) => {
            println!(
                "{} complete: {} artifacts in {} ({:.2}s)",
                manifest.subcommand,
                manifest.outputs.len(),
                cli.out.display(),
                manifest.wall_time_s
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

//! `wavepinn` command-line entry point.
//!
//! Exit codes: 0 success, 1 configuration or validation error, 2 quality
//! threshold missed, 3 numerical failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{exit_code, Context};

#[derive(Parser)]
#[command(
    name = "wavepinn",
    version,
    about = "Physics-informed surrogates for 1D room acoustics"
)]
struct Cli {
    /// Worker threads for batched network evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output root that relative `output_dir` values resolve against.
    #[arg(long, global = true, env = "WAVEPINN_OUTPUT_ROOT")]
    output_root: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArg {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a rational admittance to the wall material and write the material file.
    FitMaterial(ConfigArg),
    /// Train the surrogate networks.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Write reference traces for the evaluation pairs.
    Reference(ConfigArg),
    /// Compare predictions with the reference traces.
    Evaluate {
        #[command(flatten)]
        config: ConfigArg,
        /// Checkpoint to evaluate (default: the output directory's).
        #[arg(long, conflicts_with = "predictions")]
        checkpoint: Option<PathBuf>,
        /// Directory of prediction CSVs to score instead of a checkpoint.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Sample the trained surrogate as an impulse response.
    ExtractIr {
        #[command(flatten)]
        config: ConfigArg,
        /// Checkpoint to sample (default: the output directory's).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Source position (normalized).
        #[arg(long, allow_negative_numbers = true)]
        x0: f64,
        /// Receiver position (normalized).
        #[arg(long, allow_negative_numbers = true)]
        receiver: f64,
        /// Sample rate in Hz.
        #[arg(long, default_value_t = 44_100.0)]
        fs: f64,
        /// Length in physical seconds (default: the trained horizon).
        #[arg(long)]
        duration: Option<f64>,
        /// Output CSV (default: inside the output directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time batched evaluation of the pressure network.
    Benchmark {
        #[command(flatten)]
        config: ConfigArg,
        /// Checkpoint to time (default: a freshly initialized network).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| wavepinn::Error::Config(format!("cannot build thread pool: {e}")))?;
    }
    let load = |c: &ConfigArg| Context::load(c.config.as_deref(), cli.output_root.as_deref());
    match &cli.command {
        Command::FitMaterial(c) => commands::fit_material(&load(c)?),
        Command::Train { config, resume } => commands::train(&load(config)?, *resume),
        Command::Reference(c) => commands::reference(&load(c)?),
        Command::Evaluate {
            config,
            checkpoint,
            predictions,
        } => commands::evaluate(
            &load(config)?,
            checkpoint.as_deref(),
            predictions.as_deref(),
        ),
        Command::ExtractIr {
            config,
            checkpoint,
            x0,
            receiver,
            fs,
            duration,
            out,
        } => commands::extract_ir(
            &load(config)?,
            checkpoint.as_deref(),
            *x0,
            *receiver,
            *fs,
            *duration,
            out.as_deref(),
        ),
        Command::Benchmark { config, checkpoint } => {
            commands::benchmark(&load(config)?, checkpoint.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

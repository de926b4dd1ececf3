//! Command-line front end for the fibril-array design pipeline.

use clap::{Parser, Subcommand};
use fibril_core::config::{load_config, RunConfig};
use fibril_core::error::Result;
use fibril_core::pipeline;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "fibril",
    version,
    about = "Exact fibril-array detachment simulation, surrogate training, and compliance design"
)]
struct Cli {
    /// Path to the JSON run configuration.
    #[arg(short, long, global = true, default_value = "config.json")]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Cap worker threads (1 = single-threaded reference mode).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one detachment trace for the configured layout.
    Simulate,
    /// Generate and label the training dataset.
    Dataset,
    /// Fit the surrogate models and write the comparison table.
    Train,
    /// Run multi-start inverse design against the trained predictor.
    Design,
    /// Emit figure-data files from completed stages.
    Report,
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg: RunConfig = load_config(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(threads) = cli.threads {
        cfg.threads = Some(threads);
    }
    cfg.validate()?;

    if let Some(threads) = cfg.threads {
        // Ignore the error when a global pool already exists (e.g. repeated
        // invocation inside one process during tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }

    match cli.command {
        Command::Simulate => pipeline::cmd_simulate(&cfg),
        Command::Dataset => pipeline::cmd_dataset(&cfg),
        Command::Train => pipeline::cmd_train(&cfg),
        Command::Design => pipeline::cmd_design(&cfg),
        Command::Report => pipeline::cmd_report(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

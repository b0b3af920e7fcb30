use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sesmap_cli::pipeline::{self, Stage, StageError};
use sesmap_cli::RunConfig;

#[derive(Parser)]
#[command(name = "sesmap", version, about = "Map urban socioeconomic status from advertising audience estimates")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the circle grid and area weights.
    Grid,
    /// Query audience estimates for every circle or unit.
    Fetch,
    /// Project circle estimates onto units.
    Project,
    /// Build the design matrix for each age model.
    Featurize,
    /// Select the penalty and fit each model.
    Fit,
    /// Leave-one-out evaluation and coefficient tables.
    Evaluate,
    /// Summary, maps and run manifest.
    Report,
    /// Write a synthetic city and a config that runs it.
    Synth,
    /// All stages from grid to report.
    Run,
}

fn load(cli: &Cli, required: bool) -> Result<RunConfig, StageError> {
    let wrap = |error: anyhow::Error| StageError { stage: Stage::Config, inputs: cli.config.iter().cloned().collect(), error };
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| wrap(e.into()))?,
        None if required => return Err(wrap(anyhow::anyhow!("--config is required for this command"))),
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.synth.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), StageError> {
    let stage = match cli.command {
        Command::Run => {
            let cfg = load(cli, true)?;
            let dir = pipeline::run_pipeline(&cfg)?;
            println!("{}", dir.display());
            return Ok(());
        }
        Command::Synth => {
            let cfg = load(cli, false)?;
            let path = pipeline::synth(&cfg, &cfg.out)?;
            println!("{}", path.display());
            return Ok(());
        }
        Command::Grid => Stage::Grid,
        Command::Fetch => Stage::Fetch,
        Command::Project => Stage::Project,
        Command::Featurize => Stage::Featurize,
        Command::Fit => Stage::Fit,
        Command::Evaluate => Stage::Evaluate,
        Command::Report => Stage::Report,
    };
    let cfg = load(cli, true)?;
    pipeline::run_one(&cfg, Stage::Config)?;
    pipeline::run_one(&cfg, stage)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

//! Experiment driver: `train`, `attack`, `criterion`, `toy-control`, and
//! `landscape` subcommands over a plain `key = value` config file.
//!
//! Exit codes: 0 success, 2 configuration/input error, 3 numeric abort.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Config, ConfigError};

#[derive(Parser)]
#[command(name = "amata", version, about = "Annealed adversarial training workbench")]
struct Cli {
    /// Configuration file (key = value lines under [section] headers).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides [run] out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Top-level seed (overrides [run] seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (overrides [run] threads).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run annealed adversarial training; emits metrics.csv, model.amlp,
    /// resolved.config.
    Train,
    /// Evaluate a trained model against a PGD attack; emits attack.json.
    Attack {
        /// Trained model (model.amlp).
        #[arg(long)]
        model: PathBuf,
    },
    /// Score inner-loop settings with the schedule-optimality gap; emits
    /// criterion.json.
    Criterion {
        #[arg(long)]
        model: PathBuf,
    },
    /// Integrate the 1-D control problem and verify the optimal schedule;
    /// emits toy.csv.
    ToyControl,
    /// Emit loss-surface and trajectory projections; emits grid.csv and
    /// traj_pgd<k>.csv files.
    Landscape {
        #[arg(long)]
        model: PathBuf,
    },
}

/// Failures carry the exit code they map to.
pub enum CliError {
    Config(ConfigError),
    Core(amata::Error),
    Io(std::io::Error, PathBuf),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<amata::Error> for CliError {
    fn from(e: amata::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(..) => 2,
            CliError::Core(e) => match e {
                amata::Error::NonFinite { .. } | amata::Error::TrainAbort { .. } => 3,
                _ => 2,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Config(e) => e.to_string(),
            CliError::Core(e) => e.to_string(),
            CliError::Io(e, path) => format!("{}: {e}", path.display()),
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(e, path.clone()))?;
            Config::parse(&text)?
        }
        None => Config::default(),
    };
    if let Some(out) = &cli.out {
        cfg.set("run", "out", out.display().to_string());
    }
    if let Some(seed) = cli.seed {
        cfg.set("run", "seed", seed.to_string());
    }
    if let Some(threads) = cli.threads {
        cfg.set("run", "threads", threads.to_string());
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {}", e.message());
            return ExitCode::from(e.exit_code());
        }
    };

    let result = (|| -> Result<(), CliError> {
        amata::configure_threads(cfg.get_usize("run", "threads")?);
        match &cli.command {
            Command::Train => commands::train(&cfg),
            Command::Attack { model } => commands::attack(&cfg, model),
            Command::Criterion { model } => commands::criterion(&cfg, model),
            Command::ToyControl => commands::toy_control(&cfg),
            Command::Landscape { model } => commands::landscape(&cfg, model),
        }
    })();

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

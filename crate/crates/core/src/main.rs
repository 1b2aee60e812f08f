use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use bosechain::experiments::{self, ExitStatus, Experiment, RunConfig, RunOptions};
use clap::{Parser, ValueEnum};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    GroundScan,
    Quench,
    Perturb,
    TransferCheck,
    Validate,
}

impl From<Command> for Experiment {
    fn from(c: Command) -> Self {
        match c {
            Command::GroundScan => Experiment::GroundScan,
            Command::Quench => Experiment::Quench,
            Command::Perturb => Experiment::Perturb,
            Command::TransferCheck => Experiment::TransferCheck,
            Command::Validate => Experiment::Validate,
        }
    }
}

/// Boson chain simulator: ground-state scans, quenches and oracle checks.
#[derive(Debug, Parser)]
#[command(name = "bosechain", version)]
struct Cli {
    experiment: Command,
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output file; overrides `out` in the config. Standard output otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Checkpoint file for the final state; overrides the config.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Adds a mirror-site ζ column.
    #[arg(long)]
    verbose: bool,
    /// Accepts configs with M ≠ N.
    #[arg(long)]
    allow_unequal_filling: bool,
}

fn fail(msg: impl std::fmt::Display, status: ExitStatus) -> ExitCode {
    eprintln!("bosechain: {msg}");
    ExitCode::from(status.code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match RunConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => return fail(e, ExitStatus::ConfigError),
    };
    let wanted = Experiment::from(cli.experiment);
    if config.experiment != wanted {
        return fail(
            format!(
                "config is for {}, not {}",
                config.experiment.name(),
                wanted.name()
            ),
            ExitStatus::ConfigError,
        );
    }
    let opts = RunOptions {
        verbose: cli.verbose,
        checkpoint: cli.checkpoint.clone(),
        allow_unequal_filling: cli.allow_unequal_filling,
    };
    let outcome = match experiments::run(&config, &opts) {
        Ok(o) => o,
        Err(e) => {
            let status = ExitStatus::from(&e);
            return fail(e, status);
        }
    };
    let written = match cli.out.as_ref().or(config.out.as_ref()) {
        Some(path) => std::fs::write(path, &outcome.output),
        None => std::io::stdout().write_all(outcome.output.as_bytes()),
    };
    if let Err(e) = written {
        return fail(e, ExitStatus::ConfigError);
    }
    if outcome.status != ExitStatus::Success {
        eprintln!(
            "bosechain: finished with exit status {}",
            outcome.status.code()
        );
    }
    ExitCode::from(outcome.status.code() as u8)
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use occtrack::sim::{generate, ScenarioKind};
use occtrack::Config;

/// Generate seeded tracking scenarios.
#[derive(Parser)]
#[command(name = "scenario", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one scenario script as TOML.
    Gen {
        /// steady, occlusion, distractor or reappear-small
        #[arg(long)]
        kind: ScenarioKind,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Config whose thresholds shape the scenario (gap lengths, small-object size).
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            kind,
            seed,
            out,
            config,
        } => {
            let cfg = match config {
                Some(p) => Config::load(p)?,
                None => Config::default(),
            };
            generate(kind, seed, &cfg).save(&out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

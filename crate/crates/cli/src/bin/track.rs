use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use occtrack::runner::{self, BatchJob};
use occtrack::sim::ScenarioScript;
use occtrack::{Ablations, Config};

/// Run the tracker over scripted scenarios.
#[derive(Parser)]
#[command(name = "track", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track one scenario, writing a JSON-Lines trace and a metrics file.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        metrics: PathBuf,
        #[command(flatten)]
        ablations: AblationArgs,
    },
    /// Track every `*.toml` scenario in a directory and write one report.
    Batch {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
        /// Also write one trace per scenario into this directory.
        #[arg(long)]
        traces: Option<PathBuf>,
        /// Run sequences one after another on a single thread.
        #[arg(long)]
        serial: bool,
        #[command(flatten)]
        ablations: AblationArgs,
    },
}

#[derive(Args)]
struct AblationArgs {
    /// Commit the main-path output every frame instead of branching.
    #[arg(long)]
    no_branching: bool,
    /// Keep native memory selection on for small missing targets.
    #[arg(long)]
    no_bypass: bool,
    /// Promote DRM candidates immediately.
    #[arg(long)]
    no_delayed_drm: bool,
    /// Let frame 0 drop out of the conditioning set.
    #[arg(long)]
    no_keep_first: bool,
}

impl From<AblationArgs> for Ablations {
    fn from(a: AblationArgs) -> Self {
        Ablations {
            no_branching: a.no_branching,
            no_bypass: a.no_bypass,
            no_delayed_drm: a.no_delayed_drm,
            no_keep_first: a.no_keep_first,
        }
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<Config> {
    match path {
        Some(p) => Ok(Config::load(p)?),
        None => Ok(Config::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            config,
            trace,
            metrics,
            ablations,
        } => {
            let cfg = load_config(config.as_ref())?;
            let script = ScenarioScript::load(&scenario)?;
            let m = runner::run_to_files(&script, &cfg, ablations.into(), &trace, &metrics)
                .with_context(|| format!("tracking {}", scenario.display()))?;
            eprintln!(
                "{}: {} frames, accuracy {:.3}, false commits {}",
                scenario.display(),
                m.frames,
                m.identity_accuracy,
                m.false_commit_count
            );
        }
        Command::Batch {
            dir,
            config,
            report,
            traces,
            serial,
            ablations,
        } => {
            let cfg = load_config(config.as_ref())?;
            let ablations: Ablations = ablations.into();
            let jobs: Vec<BatchJob> = runner::load_dir(&dir)?;
            if jobs.is_empty() {
                anyhow::bail!("no scenario files in {}", dir.display());
            }
            let results = if serial {
                runner::run_batch_serial(&jobs, &cfg, ablations)?
            } else {
                runner::run_batch(&jobs, &cfg, ablations)?
            };
            if let Some(out) = &traces {
                std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
                for (entry, trace) in &results {
                    occtrack::trace::write_jsonl(&out.join(format!("{}.jsonl", entry.name)), trace)?;
                }
            }
            let report_value = runner::report(results.into_iter().map(|(e, _)| e).collect(), ablations);
            runner::write_json(&report, &report_value)?;
            eprintln!(
                "{} sequences, mean accuracy {:.3}, false commits {}",
                report_value.summary.sequences,
                report_value.summary.mean_identity_accuracy,
                report_value.summary.false_commit_count
            );
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

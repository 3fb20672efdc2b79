//! Sequence and batch runners.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, RunMetrics};
use crate::pipeline::{Ablations, Tracker};
use crate::sim::{ScenarioKind, ScenarioScript, SimPredictor};
use crate::trace::{self, TraceEvent};

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub trace: Vec<TraceEvent>,
    pub metrics: RunMetrics,
}

/// Tracks a whole scripted sequence. The tracker is prompted with the true
/// target center on frame 0, as a user click would.
pub fn run_sequence(script: &ScenarioScript, cfg: &Config, ablations: Ablations) -> Result<RunOutput> {
    let sim = SimPredictor::new(script.clone())?;
    let truth = sim.ground_truth();
    let prompt = truth.frames.first().map(|f| f.target.center);
    let (mut tracker, first) = Tracker::init(&sim, prompt, cfg, ablations)?;
    let mut events = Vec::with_capacity(script.length);
    events.push(first);
    for t in 1..script.length {
        events.push(tracker.process_frame(&sim, t)?);
    }
    let metrics = compute_metrics(&events, &truth)?;
    Ok(RunOutput { trace: events, metrics })
}

/// Runs a sequence and writes its trace (JSON Lines) and metrics (JSON).
pub fn run_to_files(
    script: &ScenarioScript,
    cfg: &Config,
    ablations: Ablations,
    trace_path: &Path,
    metrics_path: &Path,
) -> Result<RunMetrics> {
    let out = run_sequence(script, cfg, ablations)?;
    trace::write_jsonl(trace_path, &out.trace)?;
    write_json(metrics_path, &out.metrics)?;
    Ok(out.metrics)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct BatchJob {
    pub name: String,
    pub script: ScenarioScript,
}

/// Loads every `*.toml` scenario in `dir`, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<BatchJob>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "toml") {
            paths.push(path);
        }
    }
    paths.sort();
    paths
        .into_iter()
        .map(|path| {
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(BatchJob {
                name,
                script: ScenarioScript::load(&path)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub name: String,
    pub kind: Option<ScenarioKind>,
    pub seed: u64,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub sequences: usize,
    pub mean_identity_accuracy: f64,
    pub false_commit_count: usize,
    pub total_frames_to_recover: usize,
    pub branch_commits: usize,
    pub relaxed_commits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub ablations: Ablations,
    pub summary: BatchSummary,
    pub entries: Vec<BatchEntry>,
}

fn run_job(job: &BatchJob, cfg: &Config, ablations: Ablations) -> Result<(BatchEntry, Vec<TraceEvent>)> {
    let out = run_sequence(&job.script, cfg, ablations).map_err(|e| match e {
        Error::Predictor { frame, reason } => Error::Predictor {
            frame,
            reason: format!("{}: {reason}", job.name),
        },
        other => other,
    })?;
    let entry = BatchEntry {
        name: job.name.clone(),
        kind: job.script.kind,
        seed: job.script.seed,
        metrics: out.metrics,
    };
    Ok((entry, out.trace))
}

/// Runs every job on the current thread.
pub fn run_batch_serial(
    jobs: &[BatchJob],
    cfg: &Config,
    ablations: Ablations,
) -> Result<Vec<(BatchEntry, Vec<TraceEvent>)>> {
    jobs.iter().map(|job| run_job(job, cfg, ablations)).collect()
}

/// Runs jobs concurrently, one tracker per sequence. Results keep job order.
#[cfg(feature = "parallel")]
pub fn run_batch_parallel(
    jobs: &[BatchJob],
    cfg: &Config,
    ablations: Ablations,
) -> Result<Vec<(BatchEntry, Vec<TraceEvent>)>> {
    use rayon::prelude::*;
    jobs.par_iter().map(|job| run_job(job, cfg, ablations)).collect()
}

/// Parallel when built with the `parallel` feature, serial otherwise.
pub fn run_batch(jobs: &[BatchJob], cfg: &Config, ablations: Ablations) -> Result<Vec<(BatchEntry, Vec<TraceEvent>)>> {
    #[cfg(feature = "parallel")]
    return run_batch_parallel(jobs, cfg, ablations);
    #[cfg(not(feature = "parallel"))]
    return run_batch_serial(jobs, cfg, ablations);
}

pub fn report(entries: Vec<BatchEntry>, ablations: Ablations) -> BatchReport {
    let n = entries.len();
    let summary = BatchSummary {
        sequences: n,
        mean_identity_accuracy: if n == 0 {
            0.0
        } else {
            entries.iter().map(|e| e.metrics.identity_accuracy).sum::<f64>() / n as f64
        },
        false_commit_count: entries.iter().map(|e| e.metrics.false_commit_count).sum(),
        total_frames_to_recover: entries.iter().map(|e| e.metrics.total_frames_to_recover()).sum(),
        branch_commits: entries.iter().map(|e| e.metrics.branch_commits).sum(),
        relaxed_commits: entries.iter().map(|e| e.metrics.relaxed_commits).sum(),
    };
    BatchReport {
        ablations,
        summary,
        entries,
    }
}

//! Run metrics computed from a trace against scenario ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mode::TrackingMode;
use crate::sim::{GroundTruth, Identity};
use crate::trace::TraceEvent;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeCounts {
    pub stable: usize,
    pub ambiguous: usize,
    pub recovery: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub frames: usize,
    pub visible_frames: usize,
    /// Fraction of visible frames whose committed output is the target.
    pub identity_accuracy: f64,
    /// Frames from each occlusion end to the first correct commit; a target
    /// never recovered counts the remaining frames.
    pub frames_to_recover: Vec<usize>,
    pub mean_frames_to_recover: Option<f64>,
    /// Committed frames that landed on a distractor.
    pub false_commit_count: usize,
    /// Centroid RMSE over correctly identified visible frames.
    pub centroid_rmse: f64,
    pub mode_counts: ModeCounts,
    pub branch_commits: usize,
    pub relaxed_commits: usize,
}

impl RunMetrics {
    pub fn total_frames_to_recover(&self) -> usize {
        self.frames_to_recover.iter().sum()
    }
}

/// Identity of the committed output on every frame.
pub fn committed_identities(trace: &[TraceEvent], truth: &GroundTruth) -> Result<Vec<Identity>> {
    if trace.len() != truth.len() {
        return Err(Error::Mismatch(format!(
            "trace has {} frames, ground truth {}",
            trace.len(),
            truth.len()
        )));
    }
    trace
        .iter()
        .enumerate()
        .map(|(i, e)| {
            if e.t != i {
                return Err(Error::Mismatch(format!("trace line {i} carries frame {}", e.t)));
            }
            Ok(e.output.map_or(Identity::None, |o| truth.identify(i, o.centroid)))
        })
        .collect()
}

pub fn compute_metrics(trace: &[TraceEvent], truth: &GroundTruth) -> Result<RunMetrics> {
    let ids = committed_identities(trace, truth)?;
    let n = trace.len();

    let mut visible = 0;
    let mut correct = 0;
    let mut sq_err = 0.0;
    let mut false_commits = 0;
    let mut modes = ModeCounts::default();
    for (t, (e, id)) in trace.iter().zip(&ids).enumerate() {
        let frame = &truth.frames[t];
        if frame.visible {
            visible += 1;
            if *id == Identity::Target {
                correct += 1;
                let c = e.output.expect("identified outputs exist").centroid;
                sq_err += c.distance(frame.target.center).powi(2);
            }
        }
        if matches!(id, Identity::Distractor(_)) {
            false_commits += 1;
        }
        match e.mode {
            TrackingMode::Stable => modes.stable += 1,
            TrackingMode::Ambiguous => modes.ambiguous += 1,
            TrackingMode::Recovery => modes.recovery += 1,
        }
    }

    let frames_to_recover: Vec<usize> = truth
        .occlusions
        .iter()
        .map(|&(_, end)| {
            (end..n)
                .find(|&t| truth.frames[t].visible && ids[t] == Identity::Target)
                .map_or(n.saturating_sub(end), |t| t - end)
        })
        .collect();
    let mean_frames_to_recover = (!frames_to_recover.is_empty())
        .then(|| frames_to_recover.iter().sum::<usize>() as f64 / frames_to_recover.len() as f64);

    let commits = trace.iter().filter_map(|e| e.commit.as_ref());
    Ok(RunMetrics {
        frames: n,
        visible_frames: visible,
        identity_accuracy: if visible == 0 {
            1.0
        } else {
            correct as f64 / visible as f64
        },
        frames_to_recover,
        mean_frames_to_recover,
        false_commit_count: false_commits,
        centroid_rmse: if correct == 0 {
            0.0
        } else {
            (sq_err / correct as f64).sqrt()
        },
        mode_counts: modes,
        branch_commits: commits.clone().count(),
        relaxed_commits: commits
            .filter(|c| c.path == crate::branch::ReconfirmPath::Relaxed)
            .count(),
    })
}

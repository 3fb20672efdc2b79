//! Per-frame trace events and their JSON-Lines encoding.
//!
//! Every field is always present; missing values are written as `null`.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::branch::{BranchEvidence, ReconfirmPath, RootId};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::mode::TrackingMode;
use crate::reliability::Margin;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub q: f64,
    pub s_app: f64,
    pub s_mot: f64,
    pub s_geo: f64,
    pub margin: Margin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSummary {
    pub id: u64,
    pub root_id: RootId,
    pub score: f64,
    /// Score change on this frame.
    pub increment: f64,
    pub win_streak: u32,
    pub evidence: BranchEvidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitEvent {
    pub kind: String,
    pub branch_id: u64,
    pub root_id: RootId,
    pub score: f64,
    pub increment: f64,
    pub win_streak: u32,
    pub path: ReconfirmPath,
    pub evidence: BranchEvidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEvent {
    pub drm_candidate: bool,
    /// Candidate counter after this frame's update.
    pub promotion_streak: u32,
    pub drm_promoted: bool,
    /// Frames since the previous insertion, measured before this frame's.
    pub drm_gap: usize,
    pub drm_set_size: usize,
    /// Attention set for the next frame's query.
    pub conditioning_set: Vec<usize>,
    pub noncond_selected: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputSummary {
    pub area: u64,
    pub centroid: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t: usize,
    /// Mode after this frame; commit frames are stable.
    pub mode: TrackingMode,
    /// Main-path classification before any recovery.
    pub classified: TrackingMode,
    pub init: bool,
    pub scores: Scores,
    pub small: bool,
    pub miss_streak: u32,
    pub gamma: bool,
    pub use_memory_selection: bool,
    pub spawned: bool,
    pub pruned: Vec<u64>,
    pub branches: Vec<BranchSummary>,
    pub commit: Option<CommitEvent>,
    pub memory: MemoryEvent,
    /// Anchor frames, present only when the bank changed.
    pub anchors: Option<Vec<usize>>,
    pub output: Option<OutputSummary>,
}

pub fn to_jsonl(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl(path: &Path, events: &[TraceEvent]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    w.write_all(to_jsonl(events).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn parse_jsonl(reader: impl BufRead) -> Result<Vec<TraceEvent>> {
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            what: "trace",
            message: format!("line {}: {e}", i + 1),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| Error::Parse {
            what: "trace",
            message: format!("line {}: {e}", i + 1),
        })?;
        events.push(event);
    }
    Ok(events)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<TraceEvent>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(std::io::BufReader::new(file))
}

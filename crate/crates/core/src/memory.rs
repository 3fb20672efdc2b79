//! Memory governance: delayed DRM promotion, the memory-selection bypass,
//! non-conditioning selection and the conditioning attention set.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::geometry::ReferenceStats;
use crate::mode::TrackingMode;
use crate::predictor::{MemoryView, PredictorOutput};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoncondEntry {
    pub frame: usize,
    /// objectness x predicted IoU at storage time.
    pub quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryStore {
    conditioning: BTreeSet<usize>,
    noncond: VecDeque<NoncondEntry>,
    noncond_capacity: usize,
    pub last_drm_frame: usize,
    pub promotion_streak: u32,
    pub miss_streak: u32,
}

impl MemoryStore {
    /// Store holding only the initialization frame as conditioning memory.
    pub fn new(noncond_capacity: usize) -> Self {
        MemoryStore {
            conditioning: BTreeSet::from([0]),
            noncond: VecDeque::with_capacity(noncond_capacity),
            noncond_capacity: noncond_capacity.max(1),
            last_drm_frame: 0,
            promotion_streak: 0,
            miss_streak: 0,
        }
    }

    pub fn conditioning(&self) -> &BTreeSet<usize> {
        &self.conditioning
    }

    pub fn noncond(&self) -> &VecDeque<NoncondEntry> {
        &self.noncond
    }

    /// Frames since the most recent DRM insertion.
    pub fn drm_gap(&self, t: usize) -> usize {
        t.saturating_sub(self.last_drm_frame)
    }

    /// Appends a non-conditioning entry. Frames must arrive in increasing
    /// order; the oldest entry is evicted beyond capacity.
    pub fn push_noncond(&mut self, frame: usize, quality: f64) {
        if let Some(last) = self.noncond.back() {
            assert!(frame > last.frame, "non-conditioning frames must increase");
        }
        if self.noncond.len() == self.noncond_capacity {
            self.noncond.pop_front();
        }
        self.noncond.push_back(NoncondEntry { frame, quality });
    }

    /// Counts a candidate frame and promotes `t` into conditioning memory
    /// once the streak reaches `n_drm`. Returns whether `t` was promoted.
    pub fn drm_promote(&mut self, t: usize, candidate: bool, n_drm: u32) -> bool {
        if !candidate {
            self.promotion_streak = 0;
            return false;
        }
        self.promotion_streak += 1;
        if self.promotion_streak >= n_drm {
            self.conditioning.insert(t);
            self.last_drm_frame = t;
            self.promotion_streak = 0;
            true
        } else {
            false
        }
    }

    /// Visible committed frames reset the missing streak; anything else
    /// extends it.
    pub fn update_miss_streak(&mut self, committed_area: u64) {
        if committed_area == 0 {
            self.miss_streak += 1;
        } else {
            self.miss_streak = 0;
        }
    }

    pub fn select_noncond(&self, use_selection: bool, budget: usize) -> Vec<usize> {
        select_noncond(&self.noncond, use_selection, budget)
    }

    pub fn conditioning_set(&self, t: usize, k_c: usize, keep_first: bool) -> Vec<usize> {
        conditioning_set(&self.conditioning, t, k_c, keep_first)
    }
}

/// DRM candidacy of a frame that is stable or a fresh reappearance commit.
/// `r` is the current-to-reference area ratio, `g` the gap to the last
/// insertion.
#[allow(clippy::too_many_arguments)]
pub fn drm_candidate(q: f64, g: usize, r: f64, small: bool, reappear: bool, distractor: bool, cfg: &Config) -> bool {
    let tau = if reappear { cfg.tau_drm_reappear } else { cfg.tau_drm };
    let (lo, hi) = if small {
        (cfg.r_min_small, cfg.r_max_small)
    } else {
        (cfg.r_min, cfg.r_max)
    };
    q >= tau && g >= cfg.g_min as usize && (lo..=hi).contains(&r) && (reappear || distractor)
}

/// Native memory selection is bypassed while a small object is missing or
/// the frame is not stable.
pub fn bypass_indicator(small: bool, miss_streak: u32, mode: TrackingMode) -> bool {
    small && (miss_streak > 0 || mode != TrackingMode::Stable)
}

/// Chooses `budget` non-conditioning frames.
///
/// With selection on, the highest-quality entries among the most recent
/// `2 * budget` win, ties going to the more recent frame. With selection
/// bypassed, entries are strided uniformly over the whole buffer from the
/// oldest to the most recent. Output is in increasing frame order.
pub fn select_noncond(buffer: &VecDeque<NoncondEntry>, use_selection: bool, budget: usize) -> Vec<usize> {
    let budget = budget.max(1);
    let n = buffer.len();
    if n <= budget {
        return buffer.iter().map(|e| e.frame).collect();
    }
    let mut picked: Vec<usize> = if use_selection {
        let window: Vec<&NoncondEntry> = buffer.iter().skip(n.saturating_sub(2 * budget)).collect();
        let mut ranked = window;
        ranked.sort_by(|a, b| b.quality.total_cmp(&a.quality).then(b.frame.cmp(&a.frame)));
        ranked.iter().take(budget).map(|e| e.frame).collect()
    } else if budget == 1 {
        vec![buffer[n - 1].frame]
    } else {
        let span = n - 1;
        let steps = budget - 1;
        (0..budget)
            .map(|i| buffer[(i * span + steps / 2) / steps].frame)
            .collect()
    };
    picked.sort_unstable();
    picked
}

/// Conditioning frames attended at frame `t`: frame 0 plus the `k_c - 1`
/// temporally closest DRM frames, or the plain closest `k_c` when the first
/// frame is not kept. Ties go to the more recent frame. Output is in
/// increasing frame order.
pub fn conditioning_set(drm: &BTreeSet<usize>, t: usize, k_c: usize, keep_first: bool) -> Vec<usize> {
    let closest = |pool: Vec<usize>, k: usize| -> Vec<usize> {
        let mut pool = pool;
        pool.sort_by(|&a, &b| a.abs_diff(t).cmp(&b.abs_diff(t)).then(b.cmp(&a)));
        pool.truncate(k);
        pool
    };
    let mut out = if keep_first && drm.contains(&0) {
        let rest: Vec<usize> = drm.iter().copied().filter(|&j| j != 0).collect();
        let mut out = closest(rest, k_c.saturating_sub(1));
        out.push(0);
        out
    } else {
        closest(drm.iter().copied().collect(), k_c)
    };
    out.sort_unstable();
    out
}

/// A confident alternative mask lying clearly away from the primary.
pub fn distractor_signal(output: &PredictorOutput, stats: &ReferenceStats, cfg: &Config) -> bool {
    if output.primary.geometry.is_absent() {
        return false;
    }
    let gate = cfg.d_dist * stats.median_area().sqrt();
    let c = output.primary.geometry.centroid;
    output.alternatives.iter().any(|alt| {
        !alt.geometry.is_absent() && alt.predicted_iou >= cfg.tau_dist && alt.geometry.centroid.distance(c) > gate
    })
}

/// Per-frame memory decisions, computed at frame `t` for the next query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryDecision {
    pub gamma: bool,
    pub use_memory_selection: bool,
    pub conditioning_set: Vec<usize>,
    pub noncond_selected: Vec<usize>,
    pub drm_candidate: bool,
    pub drm_promoted: bool,
}

impl MemoryDecision {
    pub fn view(&self) -> MemoryView {
        MemoryView {
            conditioning: self.conditioning_set.clone(),
            noncond: self.noncond_selected.clone(),
        }
    }
}

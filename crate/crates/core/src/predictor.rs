//! The abstraction boundary to a per-frame mask predictor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{MaskGeometry, Point};
use crate::pointer::ObjectPointer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMask {
    pub geometry: MaskGeometry,
    pub predicted_iou: f64,
    pub objectness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorOutput {
    pub primary: CandidateMask,
    /// Sorted by predicted IoU, highest first.
    pub alternatives: Vec<CandidateMask>,
    pub pointer: ObjectPointer,
    pub frame_index: usize,
}

impl PredictorOutput {
    /// Builds an output from an unordered candidate list: the highest-IoU
    /// candidate becomes the primary. Ties keep list order.
    pub fn from_candidates(
        mut candidates: Vec<CandidateMask>,
        pointer: ObjectPointer,
        frame_index: usize,
    ) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::Predictor {
                frame: frame_index,
                reason: "predictor returned no candidates".into(),
            });
        }
        for c in &candidates {
            if !(0.0..=1.0).contains(&c.predicted_iou) || !(0.0..=1.0).contains(&c.objectness) {
                return Err(Error::Predictor {
                    frame: frame_index,
                    reason: format!(
                        "candidate scores out of [0, 1]: iou {} objectness {}",
                        c.predicted_iou, c.objectness
                    ),
                });
            }
        }
        candidates.sort_by(|a, b| b.predicted_iou.total_cmp(&a.predicted_iou));
        let primary = candidates.remove(0);
        Ok(PredictorOutput {
            primary,
            alternatives: candidates,
            pointer,
            frame_index,
        })
    }

    /// Candidate IoUs, primary first.
    pub fn ious(&self) -> Vec<f64> {
        std::iter::once(self.primary.predicted_iou)
            .chain(self.alternatives.iter().map(|c| c.predicted_iou))
            .collect()
    }

    pub fn candidate_count(&self) -> usize {
        1 + self.alternatives.len()
    }
}

/// Memory frames the predictor attends to for one query.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryView {
    pub conditioning: Vec<usize>,
    pub noncond: Vec<usize>,
}

/// One predictor call. `context_id` names the inference state issuing the
/// query (the main path or one branch); `focus` is where that state expects
/// the target; `hint` is a mask centroid re-injected as a prompt.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub context_id: u64,
    pub focus: Option<Point>,
    pub hint: Option<Point>,
    pub memory: &'a MemoryView,
}

pub trait Predictor {
    fn frame_size(&self) -> (u32, u32);

    fn predict(&self, t: usize, query: &Query<'_>) -> Result<PredictorOutput>;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn frame_size(&self) -> (u32, u32) {
        (**self).frame_size()
    }

    fn predict(&self, t: usize, query: &Query<'_>) -> Result<PredictorOutput> {
        (**self).predict(t, query)
    }
}

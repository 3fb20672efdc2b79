//! Bank of verified appearance anchors used by the appearance score.

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::mode::TrackingMode;
use crate::pointer::ObjectPointer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub pointer: ObjectPointer,
    pub frame_index: usize,
    pub permanent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorBank {
    anchors: Vec<Anchor>,
    capacity: usize,
}

impl AnchorBank {
    /// A bank holding only the permanent initialization anchor.
    pub fn init(first: ObjectPointer, capacity: usize) -> Self {
        AnchorBank {
            anchors: vec![Anchor {
                pointer: first,
                frame_index: 0,
                permanent: true,
            }],
            capacity: capacity.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn frames(&self) -> Vec<usize> {
        self.anchors.iter().map(|a| a.frame_index).collect()
    }

    /// `max_i (<p, a_i> + 1) / 2` over the bank.
    pub fn best_similarity(&self, pointer: &ObjectPointer) -> f64 {
        assert!(!self.anchors.is_empty(), "anchor bank is never empty");
        self.anchors
            .iter()
            .map(|a| ((pointer.cosine(&a.pointer) + 1.0) / 2.0).clamp(0.0, 1.0))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Admits the pointer when the frame is stable, confident and novel.
    /// Returns whether the bank changed.
    pub fn maybe_add(
        &mut self,
        pointer: &ObjectPointer,
        frame_index: usize,
        q: f64,
        mode: TrackingMode,
        cfg: &Config,
    ) -> bool {
        if mode != TrackingMode::Stable || q < cfg.tau_anchor {
            return false;
        }
        let max_cos = self
            .anchors
            .iter()
            .map(|a| pointer.cosine(&a.pointer))
            .fold(f64::NEG_INFINITY, f64::max);
        if max_cos >= cfg.anchor_novelty {
            return false;
        }
        self.anchors.push(Anchor {
            pointer: pointer.clone(),
            frame_index,
            permanent: false,
        });
        if self.anchors.len() > self.capacity {
            if let Some(i) = self.anchors.iter().position(|a| !a.permanent) {
                self.anchors.remove(i);
            }
        }
        true
    }
}

//! Deterministic, seed-driven scenarios and a scripted predictor.
//!
//! A [`ScenarioScript`] fully describes one sequence: the target trajectory,
//! occlusion intervals, distractors and noise levels. [`SimPredictor`] turns a
//! script into per-frame predictor outputs that depend only on
//! `(script, frame, context id, memory view)`.

mod predictor;
mod rng;
mod script;

pub use predictor::{GroundTruth, Identity, ObjectTruth, SimPredictor, TruthFrame};
pub use script::{generate, Distractor, Interval, Keyframe, Noise, ScenarioKind, ScenarioScript};

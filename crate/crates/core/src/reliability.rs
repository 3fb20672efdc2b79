//! Reliability cues and the three-way mode classifier.

use serde::{Deserialize, Serialize};

use crate::anchor::AnchorBank;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::geometry::{MaskGeometry, Point, ReferenceStats};
use crate::mode::TrackingMode;
use crate::pointer::ObjectPointer;
use crate::predictor::PredictorOutput;

/// Gap between the two best candidate IoUs. A single candidate has no
/// competitor and never trips a margin threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Margin {
    Value(f64),
    NoCompetitor,
}

impl Margin {
    pub fn at_least(self, threshold: f64) -> bool {
        match self {
            Margin::Value(m) => m >= threshold,
            Margin::NoCompetitor => true,
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Margin::Value(m) => Some(m),
            Margin::NoCompetitor => None,
        }
    }
}

// Serialized as a number, or null for the no-competitor sentinel.
impl Serialize for Margin {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.value().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Margin {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.map_or(Margin::NoCompetitor, Margin::Value))
    }
}

pub fn appearance_score(pointer: &ObjectPointer, bank: &AnchorBank) -> f64 {
    bank.best_similarity(pointer)
}

/// Constant-velocity extrapolation from the last two stable centers.
pub fn motion_predict(c_prev: Point, c_prev2: Point) -> Point {
    c_prev + (c_prev - c_prev2)
}

pub fn motion_score(c: Point, c_hat: Point, tau_m: f64) -> f64 {
    (-c.distance(c_hat) / tau_m).exp()
}

/// Area and aspect agreement with the reference medians. For small objects
/// the area ratio is floored at `small_floor`.
pub fn geometry_score(geom: &MaskGeometry, stats: &ReferenceStats, small: bool, small_floor: f64) -> Result<f64> {
    if geom.is_absent() {
        return Err(Error::Contract("absent geometry has no geometry score".into()));
    }
    let area = geom.area as f64;
    let ref_area = stats.median_area();
    let mut r_area = (area / ref_area).min(ref_area / area);
    if small {
        r_area = r_area.max(small_floor);
    }
    let r_aspect = (geom.aspect_ratio / stats.median_aspect()).min(stats.median_aspect() / geom.aspect_ratio);
    Ok((0.7 * r_area + 0.3 * r_aspect).clamp(0.0, 1.0))
}

pub fn candidate_margin(ious: &[f64]) -> Result<Margin> {
    match ious.len() {
        0 => Err(Error::Contract("margin needs at least one candidate".into())),
        1 => Ok(Margin::NoCompetitor),
        _ => {
            let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for &q in ious {
                if q > first {
                    second = first;
                    first = q;
                } else if q > second {
                    second = q;
                }
            }
            Ok(Margin::Value(first - second))
        }
    }
}

/// Inputs to the classifier for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeInputs {
    pub q: f64,
    pub s_app: f64,
    pub s_mot: f64,
    pub s_geo: f64,
    pub margin: Margin,
    pub area: u64,
}

pub fn classify_mode(x: &ModeInputs, cfg: &Config) -> TrackingMode {
    if x.area == 0 || x.q < cfg.tau_rec || x.s_app < cfg.tau_app_rec {
        TrackingMode::Recovery
    } else if x.q < cfg.tau_unc
        || x.s_app < cfg.tau_app_unc
        || x.s_mot < cfg.tau_mot
        || x.s_geo < cfg.tau_geo
        || !x.margin.at_least(cfg.tau_delta)
    {
        TrackingMode::Ambiguous
    } else {
        TrackingMode::Stable
    }
}

/// Last two stable centers of one inference context.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MotionHistory {
    /// (frame, center), oldest first, at most two entries.
    centers: Vec<(usize, Point)>,
}

impl MotionHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a center. A center that does not directly follow the last
    /// one starts a new history, so velocity is only ever estimated from
    /// consecutive frames.
    pub fn push(&mut self, frame: usize, center: Point) {
        if self.centers.last().is_some_and(|&(f, _)| f + 1 != frame) {
            self.centers.clear();
        }
        if self.centers.len() == 2 {
            self.centers.remove(0);
        }
        self.centers.push((frame, center));
    }

    pub fn last(&self) -> Option<(usize, Point)> {
        self.centers.last().copied()
    }

    /// One-step constant-velocity prediction, if two centers are known.
    pub fn predict(&self) -> Option<Point> {
        match self.centers.as_slice() {
            [(_, c2), (_, c1)] => Some(motion_predict(*c1, *c2)),
            _ => None,
        }
    }

    /// Where this context expects the target at frame `t`: the last center
    /// extrapolated with the per-frame velocity over the elapsed frames.
    pub fn expected_at(&self, t: usize) -> Option<Point> {
        match self.centers.as_slice() {
            [] => None,
            [(_, c)] => Some(*c),
            [(_, c2), (f1, c1)] => Some(*c1 + (*c1 - *c2) * t.saturating_sub(*f1) as f64),
            _ => unreachable!(),
        }
    }

    /// Motion score of `c`; 1.0 until two centers are known.
    pub fn score(&self, c: Point, tau_m: f64) -> f64 {
        self.predict().map_or(1.0, |c_hat| motion_score(c, c_hat, tau_m))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub q: f64,
    pub s_app: f64,
    pub s_mot: f64,
    pub s_geo: f64,
    pub margin: Margin,
    pub mode: TrackingMode,
    pub predicted_center: Option<Point>,
}

impl ReliabilityReport {
    pub fn inputs(&self, area: u64) -> ModeInputs {
        ModeInputs {
            q: self.q,
            s_app: self.s_app,
            s_mot: self.s_mot,
            s_geo: self.s_geo,
            margin: self.margin,
            area,
        }
    }
}

/// Scores the primary candidate of `output` and classifies the frame.
/// Absent primaries get zero motion and geometry scores and go straight to
/// recovery.
pub fn assess(
    output: &PredictorOutput,
    motion: &MotionHistory,
    bank: &AnchorBank,
    stats: &ReferenceStats,
    small: bool,
    cfg: &Config,
) -> ReliabilityReport {
    let geom = &output.primary.geometry;
    let q = output.primary.predicted_iou;
    let s_app = appearance_score(&output.pointer, bank);
    let margin = candidate_margin(&output.ious()).expect("output has a primary");
    let predicted_center = motion.predict();
    let (s_mot, s_geo) = if geom.is_absent() {
        (0.0, 0.0)
    } else {
        let tau_m = cfg.motion_scale(geom.frame_size);
        (
            motion.score(geom.centroid, tau_m),
            geometry_score(geom, stats, small, cfg.small_area_floor).expect("visible geometry"),
        )
    };
    let inputs = ModeInputs {
        q,
        s_app,
        s_mot,
        s_geo,
        margin,
        area: geom.area,
    };
    ReliabilityReport {
        q,
        s_app,
        s_mot,
        s_geo,
        margin,
        mode: classify_mode(&inputs, cfg),
        predicted_center,
    }
}

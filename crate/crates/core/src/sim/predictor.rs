use serde::{Deserialize, Serialize};

use super::rng::{clamped_normal, normal_vec, stream};
use super::script::ScenarioScript;
use crate::error::{Error, Result};
use crate::geometry::{MaskGeometry, Point};
use crate::pointer::ObjectPointer;
use crate::predictor::{CandidateMask, MemoryView, Predictor, PredictorOutput, Query};

/// Predicted IoU of a cleanly tracked, fully supported target.
const Q_HI: f64 = 0.91;
/// Area fractions on the first two frames after an occlusion.
const RAMP: [f64; 2] = [0.5, 0.8];
/// Overlap radius, in target side lengths, within which masks get confused.
const OVERLAP_SIDES: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Identity {
    Target,
    Distractor(usize),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectTruth {
    pub center: Point,
    pub area: f64,
    pub aspect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFrame {
    pub visible: bool,
    pub target: ObjectTruth,
    pub distractors: Vec<ObjectTruth>,
    /// Identity a correct tracker should commit on this frame.
    pub expected: Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub frames: Vec<TruthFrame>,
    /// Occlusion intervals as `(start, end)`, end exclusive.
    pub occlusions: Vec<(usize, usize)>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Names the object a committed centroid lands on: the nearest object
    /// within 1.5 side lengths of its true center. An occluded target can
    /// still be matched; it simply does not count toward accuracy.
    pub fn identify(&self, t: usize, centroid: Point) -> Identity {
        let frame = &self.frames[t];
        let objects = std::iter::once((Identity::Target, &frame.target)).chain(
            frame
                .distractors
                .iter()
                .enumerate()
                .map(|(k, d)| (Identity::Distractor(k), d)),
        );
        objects
            .filter_map(|(id, o)| {
                let d = o.center.distance(centroid);
                let gate = (1.5 * o.area.sqrt()).max(6.0);
                (d <= gate).then_some((id, d))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map_or(Identity::None, |(id, _)| id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Visible(f64),
    Hidden,
}

/// Scripted stand-in for a mask predictor.
#[derive(Debug, Clone)]
pub struct SimPredictor {
    script: ScenarioScript,
    base: Vec<f64>,
    drift: Vec<f64>,
    distractor_dirs: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit vector orthogonal to every vector in `basis` (assumed orthonormal).
fn orthonormal(mut v: Vec<f64>, basis: &[&[f64]]) -> Vec<f64> {
    for b in basis {
        let p = dot(&v, b);
        v.iter_mut().zip(*b).for_each(|(x, y)| *x -= p * y);
    }
    let n = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

impl SimPredictor {
    pub fn new(script: ScenarioScript) -> Result<Self> {
        script.validate()?;
        let d = script.pointer_dim;
        let mut rng = stream(script.seed, &[0xA4C4]);
        let base = orthonormal(normal_vec(&mut rng, d), &[]);
        let drift = orthonormal(normal_vec(&mut rng, d), &[&base]);
        let distractor_dirs = (0..script.distractors.len())
            .map(|_| orthonormal(normal_vec(&mut rng, d), &[&base, &drift]))
            .collect();
        Ok(SimPredictor {
            script,
            base,
            drift,
            distractor_dirs,
        })
    }

    pub fn script(&self) -> &ScenarioScript {
        &self.script
    }

    pub fn len(&self) -> usize {
        self.script.length
    }

    pub fn is_empty(&self) -> bool {
        self.script.length == 0
    }

    /// Unit appearance archetype of the target at frame `t`.
    pub fn target_archetype(&self, t: usize) -> Vec<f64> {
        let theta = self.script.noise.appearance_drift * t as f64;
        self.base
            .iter()
            .zip(&self.drift)
            .map(|(b, u)| theta.cos() * b + theta.sin() * u)
            .collect()
    }

    /// Unit archetype of distractor `k`, at cosine `similarity` to the target.
    pub fn distractor_archetype(&self, k: usize, t: usize) -> Vec<f64> {
        let s = self.script.distractors[k].similarity;
        let c = (1.0 - s * s).max(0.0).sqrt();
        self.target_archetype(t)
            .iter()
            .zip(&self.distractor_dirs[k])
            .map(|(a, o)| s * a + c * o)
            .collect()
    }

    fn phase(&self, t: usize) -> Phase {
        if self.script.is_occluded(t) {
            return Phase::Hidden;
        }
        for iv in &self.script.occlusions {
            if t >= iv.end && t - iv.end < RAMP.len() {
                return Phase::Visible(RAMP[t - iv.end]);
            }
        }
        Phase::Visible(1.0)
    }

    /// Fraction of attended memory frames in which the target was visible.
    pub fn memory_support(&self, memory: &MemoryView) -> f64 {
        let mut frames: Vec<usize> = memory
            .conditioning
            .iter()
            .chain(&memory.noncond)
            .copied()
            .filter(|&j| j < self.script.length)
            .collect();
        frames.sort_unstable();
        frames.dedup();
        if frames.is_empty() {
            return 1.0;
        }
        let clean = frames.iter().filter(|&&j| !self.script.is_occluded(j)).count();
        clean as f64 / frames.len() as f64
    }

    pub fn ground_truth(&self) -> GroundTruth {
        let s = &self.script;
        let frames = (0..s.length)
            .map(|t| {
                let k = s.target_at(t);
                let visible = !s.is_occluded(t);
                TruthFrame {
                    visible,
                    target: ObjectTruth {
                        center: Point::new(k.x, k.y),
                        area: k.area,
                        aspect: k.aspect,
                    },
                    distractors: (0..s.distractors.len())
                        .map(|i| {
                            let d = s.distractor_at(i, t);
                            ObjectTruth {
                                center: Point::new(d.x, d.y),
                                area: d.area,
                                aspect: d.aspect,
                            }
                        })
                        .collect(),
                    expected: if visible { Identity::Target } else { Identity::None },
                }
            })
            .collect();
        GroundTruth {
            frames,
            occlusions: s.occlusions.iter().map(|iv| (iv.start, iv.end)).collect(),
        }
    }

    /// The full output together with the identity behind each candidate,
    /// primary first.
    pub fn predict_labeled(&self, t: usize, query: &Query<'_>) -> Result<(PredictorOutput, Vec<Identity>)> {
        let s = &self.script;
        if t >= s.length {
            return Err(Error::Predictor {
                frame: t,
                reason: format!("frame beyond scenario length {}", s.length),
            });
        }
        let mut rng = stream(s.seed, &[0x5EED, t as u64, query.context_id]);
        let noise = s.noise;
        let target = s.target_at(t);
        let side = target.area.sqrt();
        let focus = query.hint.or(query.focus);
        let prox = |c: Point| match focus {
            None => 1.0,
            Some(f) => {
                let d = f.distance(c);
                if d <= side {
                    1.0
                } else {
                    0.75 + 0.25 * (-(d - side) / (2.0 * side)).exp()
                }
            }
        };
        let support = 0.4 + 0.6 * self.memory_support(query.memory);
        let frame_size = s.frame_size;
        let jitter_geometry = |center: Point, area: f64, aspect: f64, rng: &mut _| {
            let c = Point::new(
                (center.x + noise.center_sigma * clamped_normal(rng, 3.0)).clamp(0.0, frame_size.0 as f64 - 1.0),
                (center.y + noise.center_sigma * clamped_normal(rng, 3.0)).clamp(0.0, frame_size.1 as f64 - 1.0),
            );
            MaskGeometry {
                area: (area * (1.0 + 0.03 * clamped_normal(rng, 2.0))).round().max(1.0) as u64,
                centroid: c,
                aspect_ratio: aspect * (1.0 + 0.02 * clamped_normal(rng, 2.0)),
                frame_size,
            }
        };

        let mut cands: Vec<(Identity, CandidateMask)> = Vec::new();
        let target_center = Point::new(target.x, target.y);
        let phase = self.phase(t);
        match phase {
            Phase::Visible(frac) => {
                let geometry = jitter_geometry(target_center, target.area * frac, target.aspect, &mut rng);
                let iou = Q_HI * support * prox(target_center) + noise.iou_sigma * clamped_normal(&mut rng, 2.0);
                let obj = 0.95 * support + 0.03 * clamped_normal(&mut rng, 2.0);
                cands.push((
                    Identity::Target,
                    CandidateMask {
                        geometry,
                        predicted_iou: iou,
                        objectness: obj,
                    },
                ));
            }
            Phase::Hidden => {}
        }
        for (k, d) in s.distractors.iter().enumerate() {
            let kf = s.distractor_at(k, t);
            let center = Point::new(kf.x, kf.y);
            let geometry = jitter_geometry(center, kf.area, kf.aspect, &mut rng);
            let mut iou = Q_HI * d.similarity * prox(center) + noise.iou_sigma * clamped_normal(&mut rng, 2.0);
            let obj = 0.9 * d.similarity + 0.03 * clamped_normal(&mut rng, 2.0);
            // Overlapping masks get confused: both IoUs pull toward their mean.
            if let (Phase::Visible(_), Some((Identity::Target, tc))) = (phase, cands.first_mut()) {
                let overlap = (1.0 - target_center.distance(center) / (OVERLAP_SIDES * side)).clamp(0.0, 1.0);
                let mean = 0.5 * (tc.predicted_iou + iou);
                tc.predicted_iou += overlap * (mean - tc.predicted_iou);
                iou += overlap * (mean - iou);
            }
            cands.push((
                Identity::Distractor(k),
                CandidateMask {
                    geometry,
                    predicted_iou: iou,
                    objectness: obj,
                },
            ));
        }
        for (_, c) in &mut cands {
            c.predicted_iou = c.predicted_iou.clamp(0.0, 1.0);
            c.objectness = c.objectness.clamp(0.0, 1.0);
        }

        if cands.is_empty() {
            let pointer = ObjectPointer::normalized(normal_vec(&mut rng, s.pointer_dim));
            let primary = CandidateMask {
                geometry: MaskGeometry::absent(frame_size),
                predicted_iou: 0.0,
                objectness: (0.05 + 0.02 * clamped_normal(&mut rng, 2.0)).clamp(0.0, 1.0),
            };
            let out = PredictorOutput {
                primary,
                alternatives: Vec::new(),
                pointer,
                frame_index: t,
            };
            return Ok((out, vec![Identity::None]));
        }

        // Stable sort keeps the target first on exact ties.
        cands.sort_by(|a, b| b.1.predicted_iou.total_cmp(&a.1.predicted_iou));
        let archetype = match cands[0].0 {
            Identity::Distractor(k) => self.distractor_archetype(k, t),
            _ => self.target_archetype(t),
        };
        let pointer = ObjectPointer::normalized(
            archetype
                .iter()
                .map(|a| a + noise.pointer_sigma * clamped_normal(&mut rng, 4.0))
                .collect(),
        );
        let labels = cands.iter().map(|c| c.0).collect();
        let mut masks = cands.into_iter().map(|c| c.1);
        let primary = masks.next().expect("non-empty");
        let out = PredictorOutput {
            primary,
            alternatives: masks.collect(),
            pointer,
            frame_index: t,
        };
        Ok((out, labels))
    }
}

impl Predictor for SimPredictor {
    fn frame_size(&self) -> (u32, u32) {
        self.script.frame_size
    }

    fn predict(&self, t: usize, query: &Query<'_>) -> Result<PredictorOutput> {
        self.predict_labeled(t, query).map(|(out, _)| out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::reliability::candidate_margin;
    use crate::sim::{generate, ScenarioKind};

    fn query(memory: &MemoryView, focus: Option<Point>) -> Query<'_> {
        Query {
            context_id: 0,
            focus,
            hint: None,
            memory,
        }
    }

    #[test]
    fn steady_outputs_track_truth() {
        let cfg = Config::default();
        let mem = MemoryView {
            conditioning: vec![0],
            noncond: vec![],
        };
        for seed in 0..20 {
            let sim = SimPredictor::new(generate(ScenarioKind::Steady, seed, &cfg)).unwrap();
            let truth = sim.ground_truth();
            for t in 0..sim.len() {
                let c = truth.frames[t].target.center;
                let out = sim.predict(t, &query(&mem, Some(c))).unwrap();
                assert!(out.primary.predicted_iou >= 0.8, "seed {seed} t {t}");
                let rel = out.primary.geometry.area as f64 / truth.frames[t].target.area;
                assert!((0.9..=1.1).contains(&rel));
                assert!(out.primary.geometry.centroid.distance(c) < 5.0);
            }
        }
    }

    #[test]
    fn occluded_frames_are_absent_or_low_iou() {
        let cfg = Config::default();
        let mem = MemoryView {
            conditioning: vec![0],
            noncond: vec![],
        };
        for seed in 0..20 {
            let sim = SimPredictor::new(generate(ScenarioKind::Occlusion, seed, &cfg)).unwrap();
            let iv = sim.script().occlusions[0];
            for t in iv.start..iv.end {
                let out = sim.predict(t, &query(&mem, None)).unwrap();
                assert!(out.primary.geometry.is_absent() || out.primary.predicted_iou < cfg.tau_rec);
            }
        }
    }

    #[test]
    fn crossing_produces_ambiguity() {
        let cfg = Config::default();
        let mem = MemoryView {
            conditioning: vec![0],
            noncond: vec![],
        };
        let mut checked = 0;
        for seed in 0..20 {
            let sim = SimPredictor::new(generate(ScenarioKind::Distractor, seed, &cfg)).unwrap();
            let truth = sim.ground_truth();
            for t in 0..sim.len() {
                let f = &truth.frames[t];
                let d = f.target.center.distance(f.distractors[0].center);
                // Heavy overlap: within half a target side length.
                if d < 0.5 * f.target.area.sqrt() {
                    let out = sim.predict(t, &query(&mem, Some(f.target.center))).unwrap();
                    assert!(out.candidate_count() >= 2);
                    let m = candidate_margin(&out.ious()).unwrap().value().unwrap();
                    assert!(m < cfg.tau_delta, "seed {seed} t {t} margin {m}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 20);
    }

    #[test]
    fn deterministic_per_context() {
        let cfg = Config::default();
        let sim = SimPredictor::new(generate(ScenarioKind::Distractor, 4, &cfg)).unwrap();
        let mem = MemoryView {
            conditioning: vec![0, 3],
            noncond: vec![5, 6],
        };
        for t in 0..sim.len() {
            let q = Query {
                context_id: 3,
                focus: Some(Point::new(100.0, 100.0)),
                hint: None,
                memory: &mem,
            };
            assert_eq!(sim.predict(t, &q).unwrap(), sim.predict(t, &q).unwrap());
        }
        let q0 = Query {
            context_id: 0,
            focus: None,
            hint: None,
            memory: &mem,
        };
        let q1 = Query { context_id: 1, ..q0 };
        assert_ne!(sim.predict(10, &q0).unwrap(), sim.predict(10, &q1).unwrap());
    }

    #[test]
    fn out_of_range_frame_rejected() {
        let sim = SimPredictor::new(generate(ScenarioKind::Steady, 1, &Config::default())).unwrap();
        let mem = MemoryView::default();
        assert!(sim.predict(sim.len(), &query(&mem, None)).is_err());
    }

    #[test]
    fn archetype_similarity_is_exact() {
        let sim = SimPredictor::new(generate(ScenarioKind::Distractor, 9, &Config::default())).unwrap();
        let sim_value = sim.script().distractors[0].similarity;
        for t in [0, 50, 119] {
            let a = sim.target_archetype(t);
            let d = sim.distractor_archetype(0, t);
            assert!((dot(&a, &a) - 1.0).abs() < 1e-12);
            assert!((dot(&a, &d) - sim_value).abs() < 1e-12);
        }
    }

    #[test]
    fn memory_support_counts_visible_frames() {
        let sim = SimPredictor::new(generate(ScenarioKind::ReappearSmall, 2, &Config::default())).unwrap();
        let iv = sim.script().occlusions[0];
        let mem = MemoryView {
            conditioning: vec![0],
            noncond: vec![iv.start, iv.start + 1, iv.start + 2],
        };
        assert!((sim.memory_support(&mem) - 0.25).abs() < 1e-12);
        assert_eq!(sim.memory_support(&MemoryView::default()), 1.0);
    }

    #[test]
    fn identify_nearest_within_gate() {
        let sim = SimPredictor::new(generate(ScenarioKind::Distractor, 5, &Config::default())).unwrap();
        let truth = sim.ground_truth();
        let f = &truth.frames[0];
        assert_eq!(truth.identify(0, f.target.center), Identity::Target);
        assert_eq!(truth.identify(0, f.distractors[0].center), Identity::Distractor(0));
        assert_eq!(truth.identify(0, Point::new(-500.0, -500.0)), Identity::None);
    }
}

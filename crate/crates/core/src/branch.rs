//! Hypothesis pool used while the main path is not trusted.
//!
//! A pool is spawned from the frame that first left the stable mode. Each
//! branch owns a private inference context and accumulates evidence frame by
//! frame; only a reconfirmed branch may replace the main path.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::anchor::AnchorBank;
use crate::config::Config;
use crate::geometry::{MaskGeometry, Point, ReferenceStats};
use crate::pointer::ObjectPointer;
use crate::predictor::{MemoryView, Predictor, PredictorOutput, Query};
use crate::reliability::{candidate_margin, geometry_score, Margin, MotionHistory};

/// Identity of the hypothesis a branch was spawned from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RootId {
    Primary,
    /// 1-based rank among the alternative masks.
    Alt(u32),
    Absent,
}

impl RootId {
    fn priority(self) -> (u8, u32) {
        match self {
            RootId::Primary => (0, 0),
            RootId::Alt(k) => (1, k),
            RootId::Absent => (2, 0),
        }
    }
}

impl PartialOrd for RootId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Tie-break order: primary, then alternatives by rank, then absent.
impl Ord for RootId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority().cmp(&other.priority())
    }
}

impl std::fmt::Display for RootId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RootId::Primary => f.write_str("primary"),
            RootId::Alt(k) => write!(f, "alt-{k}"),
            RootId::Absent => f.write_str("absent"),
        }
    }
}

impl std::str::FromStr for RootId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "primary" => Ok(RootId::Primary),
            "absent" => Ok(RootId::Absent),
            _ => s
                .strip_prefix("alt-")
                .and_then(|k| k.parse().ok())
                .map(RootId::Alt)
                .ok_or_else(|| format!("unknown root id `{s}`")),
        }
    }
}

impl Serialize for RootId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RootId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Private inference state: what one path believes about the target.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceContext {
    pub id: u64,
    pub motion: MotionHistory,
    pub pointer: ObjectPointer,
    pub last_geometry: MaskGeometry,
    pub hint: Option<Point>,
}

impl InferenceContext {
    pub fn new(id: u64, output: &PredictorOutput) -> Self {
        let mut motion = MotionHistory::new();
        motion.push(output.frame_index, output.primary.geometry.centroid);
        InferenceContext {
            id,
            motion,
            pointer: output.pointer.clone(),
            last_geometry: output.primary.geometry,
            hint: None,
        }
    }

    pub fn focus_at(&self, t: usize) -> Option<Point> {
        self.motion
            .expected_at(t)
            .or_else(|| (!self.last_geometry.is_absent()).then_some(self.last_geometry.centroid))
    }

    pub fn query<'a>(&self, t: usize, memory: &'a MemoryView) -> Query<'a> {
        Query {
            context_id: self.id,
            focus: self.focus_at(t),
            hint: self.hint,
            memory,
        }
    }

    /// Folds a visible observation into the context. Absent observations
    /// leave it untouched.
    pub fn observe(&mut self, output: &PredictorOutput) {
        let geom = &output.primary.geometry;
        if geom.is_absent() {
            return;
        }
        self.motion.push(output.frame_index, geom.centroid);
        self.pointer = output.pointer.clone();
        self.last_geometry = *geom;
        self.hint = None;
    }
}

/// Monotone id source shared by the main path and every branch of one tracker.
#[derive(Debug, Clone, Default)]
pub struct ContextIds(u64);

impl ContextIds {
    /// Id 0 is reserved for the main path.
    pub fn new() -> Self {
        ContextIds(1)
    }

    pub fn next_id(&mut self) -> u64 {
        let id = self.0;
        self.0 += 1;
        id
    }
}

/// Per-frame evidence for one branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchEvidence {
    pub q: f64,
    pub objectness: f64,
    pub s_app: f64,
    pub s_mot: f64,
    pub s_geo: f64,
    pub area: u64,
    pub margin: Margin,
}

impl BranchEvidence {
    /// Per-frame increment of the accumulated branch score.
    pub fn increment(&self, cfg: &Config) -> f64 {
        let absent = if self.area == 0 { 1.0 } else { 0.0 };
        self.q.max(cfg.epsilon).ln()
            + 0.5 * self.objectness.max(cfg.epsilon).ln()
            + cfg.lambda_a * self.s_app
            + cfg.lambda_m * self.s_mot
            + cfg.lambda_g * self.s_geo
            - cfg.lambda_e * absent
    }
}

/// `S <- S + increment(obs)`.
pub fn step_score(score: f64, obs: &BranchEvidence, cfg: &Config) -> f64 {
    score + obs.increment(cfg)
}

/// Shared frame-level inputs for scoring branch observations.
#[derive(Debug, Clone, Copy)]
pub struct ScoringEnv<'a> {
    pub bank: &'a AnchorBank,
    pub stats: &'a ReferenceStats,
    pub small: bool,
    /// Objectness of the main-path primary this frame.
    pub main_objectness: f64,
    pub cfg: &'a Config,
}

impl ScoringEnv<'_> {
    /// Evidence of a visible-hypothesis branch. An empty mask describes
    /// nothing, so its appearance, motion and geometry terms are zero.
    pub fn observed(&self, output: &PredictorOutput, motion: &MotionHistory) -> BranchEvidence {
        let geom = &output.primary.geometry;
        let margin = candidate_margin(&output.ious()).expect("output has a primary");
        let (s_app, s_mot, s_geo) = if geom.is_absent() {
            (0.0, 0.0, 0.0)
        } else {
            (
                self.bank.best_similarity(&output.pointer),
                motion.score(geom.centroid, self.cfg.motion_scale(geom.frame_size)),
                geometry_score(geom, self.stats, self.small, self.cfg.small_area_floor).expect("visible geometry"),
            )
        };
        BranchEvidence {
            q: output.primary.predicted_iou,
            objectness: output.primary.objectness,
            s_app,
            s_mot,
            s_geo,
            area: geom.area,
            margin,
        }
    }

    /// Evidence of the explicit absent-object hypothesis.
    pub fn absent(&self) -> BranchEvidence {
        let eps = self.cfg.epsilon;
        BranchEvidence {
            q: eps,
            objectness: (1.0 - self.main_objectness).clamp(eps, 1.0),
            s_app: 0.0,
            s_mot: 0.0,
            s_geo: 0.0,
            area: 0,
            margin: Margin::NoCompetitor,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: u64,
    pub root: RootId,
    pub created_at: usize,
    /// `None` for the absent hypothesis, which never queries the predictor.
    pub context: Option<InferenceContext>,
    pub score: f64,
    pub win_streak: u32,
    /// Output for the frame being processed, if already obtained.
    pub current: Option<PredictorOutput>,
    pub last_output: Option<PredictorOutput>,
    pub last_evidence: Option<BranchEvidence>,
    pub last_increment: f64,
}

impl Branch {
    fn new(id: u64, root: RootId, t: usize, context: Option<InferenceContext>) -> Self {
        Branch {
            id,
            root,
            created_at: t,
            context,
            score: 0.0,
            win_streak: 0,
            current: None,
            last_output: None,
            last_evidence: None,
            last_increment: 0.0,
        }
    }

    fn rank_cmp(&self, other: &Branch) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.root.cmp(&other.root))
            .then(self.created_at.cmp(&other.created_at))
            .then(self.id.cmp(&other.id))
    }

    pub fn is_visible(&self) -> bool {
        self.last_evidence.is_some_and(|e| e.area > 0)
    }
}

/// Which reconfirmation rule accepted a branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconfirmPath {
    /// Several consecutive wins with strong appearance.
    Generic,
    /// Reappearance after a long missing streak.
    Relaxed,
}

/// Reconfirmation test for the current pool argmax.
pub fn check_reconfirm(
    win_streak: u32,
    miss_streak: u32,
    evidence: &BranchEvidence,
    cfg: &Config,
) -> Option<ReconfirmPath> {
    if miss_streak >= cfg.l_miss {
        let ok = win_streak >= 1
            && evidence.q >= cfg.tau_rep_iou
            && evidence.s_app >= cfg.tau_rep_app
            && evidence.margin.at_least(cfg.tau_rep_delta)
            && evidence.area > 0;
        ok.then_some(ReconfirmPath::Relaxed)
    } else {
        let ok = win_streak >= cfg.n_win && evidence.s_app >= cfg.tau_reconf_app && evidence.area > 0;
        ok.then_some(ReconfirmPath::Generic)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BranchPool {
    branches: Vec<Branch>,
    pub frames_in_recovery: u32,
}

impl BranchPool {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a pool from the output that left the stable mode: a primary
    /// branch, up to `branch_keep - 2` alternatives re-queried with their
    /// mask as a hint, and the absent hypothesis. A failed hint query drops
    /// only that branch.
    pub fn spawn<P: Predictor + ?Sized>(
        output: &PredictorOutput,
        main: &InferenceContext,
        predictor: &P,
        memory: &MemoryView,
        ids: &mut ContextIds,
        cfg: &Config,
    ) -> BranchPool {
        let t = output.frame_index;
        let mut branches = Vec::with_capacity(cfg.branch_keep);

        let mut primary_ctx = main.clone();
        primary_ctx.id = ids.next_id();
        let mut primary = Branch::new(primary_ctx.id, RootId::Primary, t, Some(primary_ctx));
        primary.current = Some(output.clone());
        branches.push(primary);

        let alt_slots = cfg.branch_keep.saturating_sub(2);
        for (k, alt) in output.alternatives.iter().take(alt_slots).enumerate() {
            let id = ids.next_id();
            let hint = alt.geometry.centroid;
            let query = Query {
                context_id: id,
                focus: Some(hint),
                hint: Some(hint),
                memory,
            };
            let Ok(hinted) = predictor.predict(t, &query) else {
                continue;
            };
            // Fresh history: the hinted observation is folded in when scored.
            let ctx = InferenceContext {
                id,
                motion: MotionHistory::new(),
                pointer: hinted.pointer.clone(),
                last_geometry: MaskGeometry::absent(hinted.primary.geometry.frame_size),
                hint: Some(hint),
            };
            let mut branch = Branch::new(id, RootId::Alt(k as u32 + 1), t, Some(ctx));
            branch.current = Some(hinted);
            branches.push(branch);
        }

        if cfg.branch_keep >= 2 {
            branches.push(Branch::new(ids.next_id(), RootId::Absent, t, None));
        }
        BranchPool {
            branches,
            frames_in_recovery: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn clear(&mut self) {
        self.branches.clear();
        self.frames_in_recovery = 0;
    }

    /// Obtains this frame's output for every branch that still needs one.
    /// Branches whose query fails are dropped.
    pub fn propagate<P: Predictor + ?Sized>(&mut self, t: usize, predictor: &P, memory: &MemoryView) {
        self.branches.retain_mut(|b| {
            let Some(ctx) = &b.context else {
                return true;
            };
            if b.current.as_ref().is_some_and(|o| o.frame_index == t) {
                return true;
            }
            match predictor.predict(t, &ctx.query(t, memory)) {
                Ok(out) => {
                    b.current = Some(out);
                    true
                }
                Err(_) => false,
            }
        });
    }

    /// Scores every branch on its current output and folds the observation
    /// into its context.
    pub fn score_frame(&mut self, env: &ScoringEnv<'_>) {
        for b in &mut self.branches {
            let evidence = match (&mut b.context, b.current.take()) {
                (Some(ctx), Some(out)) => {
                    let ev = env.observed(&out, &ctx.motion);
                    ctx.observe(&out);
                    b.last_output = Some(out);
                    ev
                }
                _ => env.absent(),
            };
            let inc = evidence.increment(env.cfg);
            b.score += inc;
            b.last_increment = inc;
            b.last_evidence = Some(evidence);
        }
    }

    /// Keeps the best branch per root, then the global top `branch_keep`,
    /// ordered best first.
    pub fn prune(&mut self, branch_keep: usize) {
        let mut best: BTreeMap<RootId, Branch> = BTreeMap::new();
        for b in self.branches.drain(..) {
            match best.get(&b.root) {
                Some(kept) if kept.rank_cmp(&b) != Ordering::Greater => {}
                _ => {
                    best.insert(b.root, b);
                }
            }
        }
        self.branches = best.into_values().collect();
        self.branches.sort_by(Branch::rank_cmp);
        self.branches.truncate(branch_keep);
    }

    /// The argmax gains a win; everyone else resets.
    pub fn update_win_streaks(&mut self) {
        for (i, b) in self.branches.iter_mut().enumerate() {
            b.win_streak = if i == 0 { b.win_streak + 1 } else { 0 };
        }
    }

    pub fn leader(&self) -> Option<&Branch> {
        self.branches.first()
    }

    /// Removes and returns the argmax, clearing the pool.
    pub fn take_leader(&mut self) -> Option<Branch> {
        let leader = if self.branches.is_empty() {
            None
        } else {
            Some(self.branches.remove(0))
        };
        self.clear();
        leader
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Result;
    use crate::predictor::CandidateMask;
    use proptest::prelude::*;

    fn ev(q: f64, o: f64, app: f64, mot: f64, geo: f64, area: u64) -> BranchEvidence {
        BranchEvidence {
            q,
            objectness: o,
            s_app: app,
            s_mot: mot,
            s_geo: geo,
            area,
            margin: Margin::NoCompetitor,
        }
    }

    #[test]
    fn step_score_examples() {
        let cfg = Config::default();
        assert!((step_score(0.0, &ev(1.0, 1.0, 1.0, 1.0, 1.0, 10), &cfg) - 3.0).abs() < 1e-12);
        assert!((step_score(0.0, &ev(1.0, 1.0, 0.0, 0.0, 0.0, 0), &cfg) + 1.0).abs() < 1e-12);
        let inc = ev(0.0, 1.0, 0.0, 0.0, 0.0, 5).increment(&cfg);
        assert!((inc - 1e-4f64.ln()).abs() < 1e-12);
        assert!((inc + 9.210_340_371_976_182).abs() < 1e-9);
    }

    #[test]
    fn root_ordering_and_names() {
        assert!(RootId::Primary < RootId::Alt(1));
        assert!(RootId::Alt(1) < RootId::Alt(2));
        assert!(RootId::Alt(9) < RootId::Absent);
        for r in [RootId::Primary, RootId::Alt(2), RootId::Absent] {
            assert_eq!(r.to_string().parse::<RootId>().unwrap(), r);
        }
        assert!("alt-x".parse::<RootId>().is_err());
    }

    fn bare(id: u64, root: RootId, score: f64, created_at: usize) -> Branch {
        let mut b = Branch::new(id, root, created_at, None);
        b.score = score;
        b
    }

    #[test]
    fn prune_keeps_best_per_root() {
        let mut pool = BranchPool {
            branches: vec![bare(1, RootId::Primary, 2.0, 0), bare(2, RootId::Primary, 3.0, 0)],
            frames_in_recovery: 0,
        };
        pool.prune(3);
        assert_eq!(pool.len(), 1);
        assert_eq!(pool.branches()[0].score, 3.0);
    }

    #[test]
    fn prune_truncates_lowest() {
        let mut pool = BranchPool {
            branches: vec![
                bare(1, RootId::Primary, 1.0, 0),
                bare(2, RootId::Alt(1), 4.0, 0),
                bare(3, RootId::Alt(2), -2.0, 0),
                bare(4, RootId::Absent, 0.5, 0),
            ],
            frames_in_recovery: 0,
        };
        pool.prune(3);
        let roots: Vec<RootId> = pool.branches().iter().map(|b| b.root).collect();
        assert_eq!(roots, vec![RootId::Alt(1), RootId::Primary, RootId::Absent]);
    }

    #[test]
    fn prune_tie_prefers_primary() {
        let mut pool = BranchPool {
            branches: vec![bare(1, RootId::Absent, 1.0, 0), bare(2, RootId::Primary, 1.0, 0)],
            frames_in_recovery: 0,
        };
        pool.prune(3);
        assert_eq!(pool.branches()[0].root, RootId::Primary);
    }

    #[test]
    fn reconfirm_examples() {
        let cfg = Config::default();
        let mut e = ev(0.55, 0.9, 0.7, 0.5, 0.5, 30);
        e.margin = Margin::Value(0.08);
        assert_eq!(check_reconfirm(1, 12, &e, &cfg), Some(ReconfirmPath::Relaxed));
        let gone = BranchEvidence { area: 0, ..e };
        assert_eq!(check_reconfirm(1, 12, &gone, &cfg), None);
        assert_eq!(check_reconfirm(2, 0, &ev(0.9, 0.9, 0.9, 1.0, 1.0, 30), &cfg), None);
        assert_eq!(
            check_reconfirm(3, 0, &ev(0.9, 0.9, 0.9, 1.0, 1.0, 30), &cfg),
            Some(ReconfirmPath::Generic)
        );
        // The miss streak crossing l_miss switches rules.
        assert_eq!(check_reconfirm(1, 9, &e, &cfg), None);
        assert_eq!(check_reconfirm(1, 10, &e, &cfg), Some(ReconfirmPath::Relaxed));
    }

    struct Fixed;

    fn out(t: usize, x: f64, iou: f64) -> PredictorOutput {
        let geometry = MaskGeometry {
            area: 100,
            centroid: Point::new(x, 50.0),
            aspect_ratio: 1.0,
            frame_size: (640, 480),
        };
        PredictorOutput {
            primary: CandidateMask {
                geometry,
                predicted_iou: iou,
                objectness: 0.9,
            },
            alternatives: vec![],
            pointer: ObjectPointer::normalized(vec![1.0, 0.0]),
            frame_index: t,
        }
    }

    impl Predictor for Fixed {
        fn frame_size(&self) -> (u32, u32) {
            (640, 480)
        }
        fn predict(&self, t: usize, q: &Query<'_>) -> Result<PredictorOutput> {
            match q.hint {
                Some(h) if h.x > 500.0 => Err(crate::error::Error::Predictor {
                    frame: t,
                    reason: "no".into(),
                }),
                Some(h) => Ok(out(t, h.x, 0.7)),
                None => Ok(out(t, q.focus.map_or(0.0, |f| f.x), 0.8)),
            }
        }
    }

    fn with_alts(n: usize) -> PredictorOutput {
        let mut o = out(5, 10.0, 0.9);
        for k in 0..n {
            let mut alt = o.primary.clone();
            alt.predicted_iou = 0.6 - 0.1 * k as f64;
            alt.geometry.centroid.x = 100.0 + 50.0 * k as f64;
            o.alternatives.push(alt);
        }
        o
    }

    #[test]
    fn spawn_shapes() {
        let cfg = Config::default();
        let mem = MemoryView::default();
        let main = InferenceContext::new(0, &out(4, 8.0, 0.9));
        let roots = |p: &BranchPool| p.branches().iter().map(|b| b.root).collect::<Vec<_>>();

        let p = BranchPool::spawn(&with_alts(2), &main, &Fixed, &mem, &mut ContextIds::new(), &cfg);
        assert_eq!(roots(&p), vec![RootId::Primary, RootId::Alt(1), RootId::Absent]);
        assert!(p.branches().iter().all(|b| b.score == 0.0));

        let p = BranchPool::spawn(&with_alts(0), &main, &Fixed, &mem, &mut ContextIds::new(), &cfg);
        assert_eq!(roots(&p), vec![RootId::Primary, RootId::Absent]);

        let one = Config {
            branch_keep: 1,
            ..Config::default()
        };
        let p = BranchPool::spawn(&with_alts(2), &main, &Fixed, &mem, &mut ContextIds::new(), &one);
        assert_eq!(roots(&p), vec![RootId::Primary]);

        let four = Config {
            branch_keep: 4,
            ..Config::default()
        };
        let mut o = with_alts(2);
        o.alternatives[1].geometry.centroid.x = 600.0;
        let p = BranchPool::spawn(&o, &main, &Fixed, &mem, &mut ContextIds::new(), &four);
        assert_eq!(roots(&p), vec![RootId::Primary, RootId::Alt(1), RootId::Absent]);
    }

    #[test]
    fn contexts_are_independent() {
        let cfg = Config::default();
        let mem = MemoryView::default();
        let main = InferenceContext::new(0, &out(4, 8.0, 0.9));
        let mut p = BranchPool::spawn(&with_alts(1), &main, &Fixed, &mem, &mut ContextIds::new(), &cfg);
        let bank = AnchorBank::init(ObjectPointer::normalized(vec![1.0, 0.0]), 8);
        let stats = ReferenceStats::new(&out(0, 0.0, 0.9).primary.geometry, 15).unwrap();
        let env = ScoringEnv {
            bank: &bank,
            stats: &stats,
            small: false,
            main_objectness: 0.9,
            cfg: &cfg,
        };
        p.score_frame(&env);
        p.propagate(6, &Fixed, &mem);
        p.score_frame(&env);
        let xs: Vec<f64> = p
            .branches()
            .iter()
            .filter_map(|b| b.context.as_ref())
            .map(|c| c.last_geometry.centroid.x)
            .collect();
        assert_eq!(xs.len(), 2);
        assert_ne!(xs[0], xs[1]);
        assert_eq!(main.last_geometry.centroid.x, 8.0);
    }

    fn arb_pool() -> impl Strategy<Value = BranchPool> {
        let root = prop_oneof![
            Just(RootId::Primary),
            (1u32..4).prop_map(RootId::Alt),
            Just(RootId::Absent)
        ];
        proptest::collection::vec((root, -20.0f64..20.0, 0usize..5), 1..12).prop_map(|v| BranchPool {
            branches: v
                .into_iter()
                .enumerate()
                .map(|(i, (r, s, c))| bare(i as u64, r, (s * 4.0).round() / 4.0, c))
                .collect(),
            frames_in_recovery: 0,
        })
    }

    proptest! {
        #[test]
        fn prune_is_idempotent_and_bounded(mut pool in arb_pool(), keep in 1usize..5) {
            pool.prune(keep);
            prop_assert!(pool.len() <= keep);
            let mut roots: Vec<RootId> = pool.branches().iter().map(|b| b.root).collect();
            roots.sort();
            roots.dedup();
            prop_assert_eq!(roots.len(), pool.len());
            let once = pool.clone();
            pool.prune(keep);
            prop_assert_eq!(once, pool);
        }

        #[test]
        fn win_streaks_track_the_leader(mut pool in arb_pool(), frames in 1usize..6) {
            pool.prune(3);
            for _ in 0..frames {
                pool.update_win_streaks();
            }
            prop_assert_eq!(pool.branches()[0].win_streak, frames as u32);
            prop_assert!(pool.branches()[1..].iter().all(|b| b.win_streak == 0));
        }
    }
}

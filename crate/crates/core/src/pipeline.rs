//! The per-frame tracker: stable single-path tracking until reliability
//! degrades, then branch recovery until a hypothesis is reconfirmed.

use serde::{Deserialize, Serialize};

use crate::anchor::AnchorBank;
use crate::branch::{check_reconfirm, Branch, BranchPool, ContextIds, InferenceContext, ReconfirmPath, ScoringEnv};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::geometry::{small_object_flag, Point, ReferenceStats};
use crate::memory::{bypass_indicator, distractor_signal, drm_candidate, MemoryStore};
use crate::mode::TrackingMode;
use crate::predictor::{MemoryView, Predictor, PredictorOutput, Query};
use crate::reliability::{assess, ReliabilityReport};
use crate::trace::{BranchSummary, CommitEvent, MemoryEvent, OutputSummary, Scores, TraceEvent};

/// Switches that disable one mechanism each.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    /// Commit the main-path output on every frame; never spawn branches.
    pub no_branching: bool,
    /// Never bypass native memory selection.
    pub no_bypass: bool,
    /// Promote every DRM candidate immediately.
    pub no_delayed_drm: bool,
    /// Do not force frame 0 into the conditioning set.
    pub no_keep_first: bool,
}

impl Ablations {
    /// The config the tracker actually runs with.
    pub fn apply(&self, cfg: &Config) -> Config {
        let mut cfg = cfg.clone();
        if self.no_delayed_drm {
            cfg.n_drm = 1;
        }
        if self.no_keep_first {
            cfg.keep_first_cond_frame = false;
        }
        cfg
    }
}

/// Everything a tracker carries from one frame to the next.
#[derive(Debug, Clone)]
pub struct TrackerState {
    pub mode: TrackingMode,
    pub main: InferenceContext,
    pub stats: ReferenceStats,
    pub bank: AnchorBank,
    pub memory: MemoryStore,
    pub pool: BranchPool,
    /// Frame the next call to `process_frame` must receive.
    pub t: usize,
    ids: ContextIds,
    next_view: MemoryView,
}

#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: Config,
    ablations: Ablations,
    frame_size: (u32, u32),
    state: TrackerState,
}

struct Committed {
    output: PredictorOutput,
    q: f64,
    event: Option<CommitEvent>,
}

impl Tracker {
    /// Initializes from frame 0, optionally prompted with a point on the
    /// target. Returns the tracker and the frame-0 event.
    pub fn init<P: Predictor + ?Sized>(
        predictor: &P,
        prompt: Option<Point>,
        cfg: &Config,
        ablations: Ablations,
    ) -> Result<(Tracker, TraceEvent)> {
        cfg.validate()?;
        let cfg = ablations.apply(cfg);
        let empty = MemoryView::default();
        let query = Query {
            context_id: 0,
            focus: prompt,
            hint: prompt,
            memory: &empty,
        };
        let first = predictor.predict(0, &query)?;
        let geom = first.primary.geometry;
        if geom.is_absent() {
            return Err(Error::Predictor {
                frame: 0,
                reason: "initial mask is empty".into(),
            });
        }
        let stats = ReferenceStats::new(&geom, cfg.median_window)?;
        let bank = AnchorBank::init(first.pointer.clone(), cfg.anchor_capacity);
        let memory = MemoryStore::new(cfg.noncond_buffer_capacity());
        let mut tracker = Tracker {
            frame_size: predictor.frame_size(),
            ablations,
            state: TrackerState {
                mode: TrackingMode::Stable,
                main: InferenceContext::new(0, &first),
                stats,
                bank,
                memory,
                pool: BranchPool::empty(),
                t: 1,
                ids: ContextIds::new(),
                next_view: MemoryView::default(),
            },
            cfg,
        };
        let small = tracker.small();
        let (gamma, memory_event) = tracker.plan_next(0, small, false, false);
        let anchors = Some(tracker.state.bank.frames());
        let event = TraceEvent {
            t: 0,
            mode: TrackingMode::Stable,
            classified: TrackingMode::Stable,
            init: true,
            scores: Scores {
                q: first.primary.predicted_iou,
                s_app: 1.0,
                s_mot: 1.0,
                s_geo: 1.0,
                margin: crate::reliability::candidate_margin(&first.ious())?,
            },
            small,
            miss_streak: 0,
            gamma,
            use_memory_selection: !gamma,
            spawned: false,
            pruned: Vec::new(),
            branches: Vec::new(),
            commit: None,
            memory: memory_event,
            anchors,
            output: Some(OutputSummary {
                area: geom.area,
                centroid: geom.centroid,
            }),
        };
        Ok((tracker, event))
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn ablations(&self) -> Ablations {
        self.ablations
    }

    pub fn state(&self) -> &TrackerState {
        &self.state
    }

    fn small(&self) -> bool {
        small_object_flag(&self.state.stats, self.frame_size, self.cfg.small_area_fraction)
    }

    /// Processes frame `t`, which must directly follow the previous one.
    pub fn process_frame<P: Predictor + ?Sized>(&mut self, predictor: &P, t: usize) -> Result<TraceEvent> {
        if t != self.state.t {
            return Err(Error::Contract(format!("expected frame {}, got {t}", self.state.t)));
        }
        let cfg = self.cfg.clone();
        let view = std::mem::take(&mut self.state.next_view);

        // 1. main-path query
        let main_out = predictor.predict(t, &self.state.main.query(t, &view))?;

        // 2. reliability and mode
        let small = self.small();
        let st = &self.state;
        let report = assess(&main_out, &st.main.motion, &st.bank, &st.stats, small, &cfg);
        let classified = report.mode;

        let mut spawned = false;
        let mut pruned = Vec::new();
        let mut committed: Option<Committed> = None;
        let mut reappear = false;
        let mode;

        if classified.is_stable() {
            // 3. stable: the main path commits its own output
            self.state.pool.clear();
            committed = Some(Committed {
                q: report.q,
                output: main_out.clone(),
                event: None,
            });
            mode = TrackingMode::Stable;
        } else if self.ablations.no_branching {
            committed = Some(Committed {
                q: report.q,
                output: main_out.clone(),
                event: None,
            });
            mode = classified;
        } else {
            // 4. recovery through the branch pool
            let pool = &mut self.state.pool;
            if pool.is_empty() || pool.frames_in_recovery >= cfg.max_recovery_frames {
                *pool = BranchPool::spawn(&main_out, &self.state.main, predictor, &view, &mut self.state.ids, &cfg);
                spawned = true;
            } else {
                pool.propagate(t, predictor, &view);
            }
            pool.frames_in_recovery += 1;
            let env = ScoringEnv {
                bank: &self.state.bank,
                stats: &self.state.stats,
                small,
                main_objectness: main_out.primary.objectness,
                cfg: &cfg,
            };
            pool.score_frame(&env);
            let before: Vec<u64> = pool.branches().iter().map(|b| b.id).collect();
            pool.prune(cfg.branch_keep);
            pruned = before
                .into_iter()
                .filter(|id| !pool.branches().iter().any(|b| b.id == *id))
                .collect();
            pool.update_win_streaks();

            let leader = pool.leader().expect("pool holds at least the absent branch");
            let evidence = leader.last_evidence.expect("scored this frame");
            match check_reconfirm(leader.win_streak, self.state.memory.miss_streak, &evidence, &cfg) {
                Some(path) => {
                    let winner = pool.take_leader().expect("leader exists");
                    reappear = path == ReconfirmPath::Relaxed;
                    committed = Some(self.commit(winner, path)?);
                    mode = TrackingMode::Stable;
                }
                None => mode = classified,
            }
        }

        let mut anchors_changed = false;
        let mut candidate = false;
        let drm_gap = self.state.memory.drm_gap(t);
        if let Some(c) = &committed {
            let geom = c.output.primary.geometry;
            self.state.main.observe(&c.output);
            if mode.is_stable() {
                let ratio = geom.area as f64 / self.state.stats.median_area();
                let distractor = distractor_signal(&c.output, &self.state.stats, &cfg);
                candidate = drm_candidate(c.q, drm_gap, ratio, small, reappear, distractor, &cfg);
                self.state.stats.update(&geom, TrackingMode::Stable)?;
                anchors_changed = self
                    .state
                    .bank
                    .maybe_add(&c.output.pointer, t, c.q, TrackingMode::Stable, &cfg);
            }
        }
        let promoted = self.state.memory.drm_promote(t, candidate, cfg.n_drm);

        // 5. missing streak
        match &committed {
            Some(c) => self.state.memory.update_miss_streak(c.output.primary.geometry.area),
            None => {
                let leader_absent = self
                    .state
                    .pool
                    .leader()
                    .and_then(|b| b.last_evidence)
                    .is_none_or(|e| e.area == 0);
                if leader_absent {
                    self.state.memory.update_miss_streak(0);
                }
            }
        }
        let stored = committed.as_ref().map_or(&main_out, |c| &c.output);
        self.state
            .memory
            .push_noncond(t, stored.primary.objectness * stored.primary.predicted_iou);

        // 6. attention for the next frame
        self.state.mode = mode;
        self.state.t = t + 1;
        let small_next = self.small();
        let (gamma, mut memory_event) = self.plan_next(t, small_next, candidate, promoted);
        memory_event.drm_gap = drm_gap;

        // 7. event
        let output = committed.as_ref().and_then(|c| {
            let g = c.output.primary.geometry;
            (!g.is_absent()).then_some(OutputSummary {
                area: g.area,
                centroid: g.centroid,
            })
        });
        Ok(TraceEvent {
            t,
            mode,
            classified,
            init: false,
            scores: scores(&report),
            small: small_next,
            miss_streak: self.state.memory.miss_streak,
            gamma,
            use_memory_selection: !gamma,
            spawned,
            pruned,
            branches: self.state.pool.branches().iter().map(summary).collect(),
            commit: committed.and_then(|c| c.event),
            memory: memory_event,
            anchors: anchors_changed.then(|| self.state.bank.frames()),
            output,
        })
    }

    /// Replaces the main path with a reconfirmed branch.
    fn commit(&mut self, winner: Branch, path: ReconfirmPath) -> Result<Committed> {
        let evidence = winner.last_evidence.expect("scored this frame");
        if check_reconfirm(winner.win_streak, self.state.memory.miss_streak, &evidence, &self.cfg) != Some(path) {
            return Err(Error::Contract(format!("branch {} was not reconfirmed", winner.id)));
        }
        let (Some(mut ctx), Some(output)) = (winner.context, winner.last_output) else {
            return Err(Error::Contract("the absent hypothesis cannot be committed".into()));
        };
        ctx.id = 0;
        self.state.main = ctx;
        Ok(Committed {
            q: evidence.q,
            output,
            event: Some(CommitEvent {
                kind: "commit".into(),
                branch_id: winner.id,
                root_id: winner.root,
                score: winner.score,
                increment: winner.last_increment,
                win_streak: winner.win_streak,
                path,
                evidence,
            }),
        })
    }

    /// Bypass, selection and conditioning decisions for frame `t + 1`.
    fn plan_next(&mut self, t: usize, small: bool, candidate: bool, promoted: bool) -> (bool, MemoryEvent) {
        let cfg = &self.cfg;
        let memory = &self.state.memory;
        let gamma = !self.ablations.no_bypass && bypass_indicator(small, memory.miss_streak, self.state.mode);
        let conditioning_set = memory.conditioning_set(t + 1, cfg.k_c, cfg.keep_first_cond_frame);
        let noncond_selected = memory.select_noncond(!gamma, cfg.noncond_capacity);
        self.state.next_view = MemoryView {
            conditioning: conditioning_set.clone(),
            noncond: noncond_selected.clone(),
        };
        let event = MemoryEvent {
            drm_candidate: candidate,
            promotion_streak: memory.promotion_streak,
            drm_promoted: promoted,
            drm_gap: 0,
            drm_set_size: memory.conditioning().len(),
            conditioning_set,
            noncond_selected,
        };
        (gamma, event)
    }
}

fn scores(r: &ReliabilityReport) -> Scores {
    Scores {
        q: r.q,
        s_app: r.s_app,
        s_mot: r.s_mot,
        s_geo: r.s_geo,
        margin: r.margin,
    }
}

fn summary(b: &Branch) -> BranchSummary {
    BranchSummary {
        id: b.id,
        root_id: b.root,
        score: b.score,
        increment: b.last_increment,
        win_streak: b.win_streak,
        evidence: b.last_evidence.expect("pool branches are scored"),
    }
}

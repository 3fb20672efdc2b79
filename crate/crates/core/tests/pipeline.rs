use occtrack::branch::{ReconfirmPath, RootId};
use occtrack::sim::{generate, ScenarioKind, SimPredictor};
use occtrack::{run_sequence, Ablations, Config, Error, Tracker, TrackingMode};

fn run(kind: ScenarioKind, seed: u64) -> occtrack::runner::RunOutput {
    run_sequence(
        &generate(kind, seed, &Config::default()),
        &Config::default(),
        Ablations::default(),
    )
    .unwrap()
}

#[test]
fn steady_stays_on_the_main_path() {
    for seed in 0..10 {
        let out = run(ScenarioKind::Steady, seed);
        assert_eq!(out.trace.len(), 120);
        assert!(out
            .trace
            .iter()
            .all(|e| e.mode == TrackingMode::Stable && e.branches.is_empty() && !e.spawned));
        assert_eq!(out.metrics.identity_accuracy, 1.0);
        assert_eq!(out.metrics.false_commit_count, 0);
    }
}

#[test]
fn occlusion_onset_enters_recovery_and_absent_leads() {
    let cfg = Config::default();
    for seed in 0..10 {
        let script = generate(ScenarioKind::Occlusion, seed, &cfg);
        let iv = script.occlusions[0];
        let out = run_sequence(&script, &cfg, Ablations::default()).unwrap();
        let onset = &out.trace[iv.start];
        assert_ne!(onset.mode, TrackingMode::Stable, "seed {seed}");
        assert!(onset.spawned);
        let hidden = &out.trace[iv.start + 2..iv.end];
        assert!(hidden
            .iter()
            .all(|e| e.branches[0].root_id == RootId::Absent && e.output.is_none()));
        assert_eq!(out.metrics.frames_to_recover, vec![0]);
    }
}

#[test]
fn reappearance_commits_through_relaxed_rule() {
    let cfg = Config::default();
    let script = generate(ScenarioKind::ReappearSmall, 7, &cfg);
    let iv = script.occlusions[0];
    let out = run_sequence(&script, &cfg, Ablations::default()).unwrap();
    assert!(out.trace[iv.end - 1].miss_streak >= cfg.l_miss);
    let commit = out.trace[iv.end..]
        .iter()
        .find_map(|e| e.commit.as_ref().map(|c| (e.t, c)))
        .unwrap();
    assert_eq!(commit.1.path, ReconfirmPath::Relaxed);
    assert!(commit.0 - iv.end <= 5);
    assert_eq!(out.trace[commit.0].mode, TrackingMode::Stable);
    assert_eq!(out.trace[commit.0].miss_streak, 0);
}

#[test]
fn uncertain_frames_never_touch_memory() {
    for kind in ScenarioKind::ALL {
        for seed in 0..10 {
            for e in run(kind, seed).trace {
                if e.mode != TrackingMode::Stable {
                    assert!(!e.memory.drm_promoted);
                    assert!(e.anchors.is_none());
                    assert!(!e.branches.is_empty());
                } else {
                    assert!(e.branches.is_empty());
                }
            }
        }
    }
}

#[test]
fn win_streaks_follow_the_argmax() {
    for seed in 0..10 {
        let trace = run(ScenarioKind::Distractor, seed).trace;
        for pair in trace.windows(2) {
            let (prev, cur) = (&pair[0], &pair[1]);
            for (i, b) in cur.branches.iter().enumerate() {
                if i > 0 {
                    assert_eq!(b.win_streak, 0);
                    continue;
                }
                let before = prev
                    .branches
                    .first()
                    .filter(|p| p.id == b.id)
                    .map_or(0, |p| p.win_streak);
                assert_eq!(b.win_streak, before + 1);
            }
        }
    }
}

#[test]
fn frames_must_arrive_in_order() {
    let cfg = Config::default();
    let sim = SimPredictor::new(generate(ScenarioKind::Steady, 1, &cfg)).unwrap();
    let (mut tracker, first) = Tracker::init(&sim, None, &cfg, Ablations::default()).unwrap();
    assert!(first.init);
    assert!(matches!(tracker.process_frame(&sim, 2), Err(Error::Contract(_))));
    tracker.process_frame(&sim, 1).unwrap();
    assert!(matches!(tracker.process_frame(&sim, 1), Err(Error::Contract(_))));
    assert!(matches!(tracker.process_frame(&sim, 500), Err(Error::Contract(_))));
}

#[test]
fn predictor_failure_aborts() {
    let cfg = Config::default();
    let mut script = generate(ScenarioKind::Steady, 1, &cfg);
    script.length = 5;
    script.target.retain(|k| k.frame < 5);
    if script.target.is_empty() {
        return;
    }
    let sim = SimPredictor::new(script).unwrap();
    let (mut tracker, _) = Tracker::init(&sim, None, &cfg, Ablations::default()).unwrap();
    for t in 1..5 {
        tracker.process_frame(&sim, t).unwrap();
    }
    assert!(matches!(
        tracker.process_frame(&sim, 5),
        Err(Error::Predictor { frame: 5, .. })
    ));
}

#[test]
fn ablations_take_effect() {
    let cfg = Config::default();
    let script = generate(ScenarioKind::ReappearSmall, 3, &cfg);
    let off = |a: Ablations| run_sequence(&script, &cfg, a).unwrap().trace;

    let t = off(Ablations {
        no_branching: true,
        ..Default::default()
    });
    assert!(t.iter().all(|e| e.branches.is_empty() && e.commit.is_none()));

    let t = off(Ablations {
        no_bypass: true,
        ..Default::default()
    });
    assert!(t.iter().all(|e| !e.gamma && e.use_memory_selection));

    let t = off(Ablations {
        no_keep_first: true,
        ..Default::default()
    });
    assert!(t.iter().all(|e| e.memory.conditioning_set.len() <= cfg.k_c));

    let distractor = generate(ScenarioKind::Distractor, 2, &cfg);
    let fast = run_sequence(
        &distractor,
        &cfg,
        Ablations {
            no_delayed_drm: true,
            ..Default::default()
        },
    )
    .unwrap();
    for e in &fast.trace {
        assert_eq!(e.memory.drm_promoted, e.memory.drm_candidate);
    }
}

#[test]
fn no_keep_first_can_drop_frame_zero() {
    let cfg = Config {
        k_c: 2,
        ..Config::default()
    };
    let dropped = (0..20).any(|seed| {
        let s = generate(ScenarioKind::Distractor, seed, &cfg);
        let out = run_sequence(
            &s,
            &cfg,
            Ablations {
                no_keep_first: true,
                ..Default::default()
            },
        )
        .unwrap();
        out.trace.iter().any(|e| !e.memory.conditioning_set.contains(&0))
    });
    assert!(dropped);
}

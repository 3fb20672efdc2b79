//! Trace-level invariants over random scenarios and perturbed configs.

use std::collections::{BTreeMap, BTreeSet};

use occtrack::sim::{generate, ScenarioKind};
use occtrack::{run_sequence, Ablations, Config, TrackingMode};
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = ScenarioKind> {
    prop::sample::select(ScenarioKind::ALL.to_vec())
}

fn config() -> impl Strategy<Value = Config> {
    (1usize..=5, 2usize..=8, 1u32..=4, 1u32..=8, 2u32..=6, any::<bool>()).prop_map(
        |(branch_keep, k_c, n_drm, g_min, n_win, keep_first)| Config {
            branch_keep,
            k_c,
            n_drm,
            g_min,
            n_win,
            keep_first_cond_frame: keep_first,
            ..Config::default()
        },
    )
}

fn ablations() -> impl Strategy<Value = Ablations> {
    (any::<bool>(), any::<bool>(), any::<bool>(), any::<bool>()).prop_map(|(a, b, c, d)| Ablations {
        no_branching: a,
        no_bypass: b,
        no_delayed_drm: c,
        no_keep_first: d,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pool_and_memory_invariants(kind in kind(), seed in 0u64..10_000, cfg in config(), ab in ablations()) {
        let script = generate(kind, seed, &cfg);
        let out = run_sequence(&script, &cfg, ab).unwrap();
        let eff = ab.apply(&cfg);
        prop_assert_eq!(out.trace.len(), script.length);
        let mut sums: BTreeMap<u64, f64> = BTreeMap::new();
        let mut drm = BTreeSet::from([0usize]);
        for (i, e) in out.trace.iter().enumerate() {
            prop_assert_eq!(e.t, i);
            prop_assert!(e.branches.len() <= eff.branch_keep);
            let roots: BTreeSet<_> = e.branches.iter().map(|b| b.root_id).collect();
            prop_assert_eq!(roots.len(), e.branches.len());
            if !ab.no_branching {
                prop_assert_eq!(e.mode == TrackingMode::Stable, e.branches.is_empty());
            }
            for b in &e.branches {
                let s = sums.entry(b.id).or_insert(0.0);
                *s += b.increment;
                prop_assert!((b.score - *s).abs() <= 1e-9 * s.abs().max(1.0));
            }
            if e.memory.drm_promoted {
                prop_assert_eq!(e.mode, TrackingMode::Stable);
                drm.insert(e.t);
            }
            prop_assert_eq!(e.memory.drm_set_size, drm.len());
            let c = &e.memory.conditioning_set;
            prop_assert_eq!(c.len(), eff.k_c.min(drm.len()));
            prop_assert!(c.iter().all(|j| drm.contains(j)));
            if eff.keep_first_cond_frame {
                prop_assert!(c.contains(&0));
            }
            prop_assert!(e.memory.noncond_selected.len() <= eff.noncond_capacity);
            prop_assert!(e.memory.noncond_selected.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(e.memory.noncond_selected.iter().all(|&j| j <= e.t && j > 0));
            prop_assert_eq!(e.use_memory_selection, !e.gamma);
        }
        prop_assert!((0.0..=1.0).contains(&out.metrics.identity_accuracy));
    }
}

mod common;

use crowd_core::activity::{classify_group, classify_group_axis, merge_axis_activity, ActivityBands};
use crowd_core::dynamics::DynamicsConfig;
use crowd_core::lasso::SolverConfig;
use crowd_core::synthesis::{generate, GroupSpec, Pattern, ScenarioSpec};
use crowd_core::tracks::TrackSet;
use crowd_core::Activity;
use proptest::prelude::*;

fn arb_bands() -> impl Strategy<Value = ActivityBands<f64>> {
    (0.05..0.9f64, 0.0..0.05f64, 0.0..0.05f64).prop_map(|(zero_high, below, above)| ActivityBands {
        zero_high,
        one_low: (1.0 - below).max(zero_high + 1e-3),
        one_high: 1.0 + above,
        coefficient_tolerance: 1e-6,
    })
}

fn arb_activity() -> impl Strategy<Value = Activity> {
    prop::sample::select(Activity::ALL.to_vec())
}

proptest! {
    #[test]
    fn every_modulus_gets_exactly_one_label(bands in arb_bands(), m in 0.0..3.0f64) {
        let label = classify_group_axis(Some(m), &bands);
        let rules = [
            (bands.in_zero_band(m), Activity::Stationary),
            (bands.in_one_band(m), Activity::Walking),
            (!bands.in_zero_band(m) && m <= bands.one_low, Activity::Approaching),
            (m >= bands.one_high, Activity::Splitting),
        ];
        prop_assert_eq!(rules.iter().filter(|r| r.0).count(), 1);
        prop_assert_eq!(rules.iter().find(|r| r.0).unwrap().1, label);
    }

    #[test]
    fn merge_never_lowers_priority(a in arb_activity(), b in arb_activity()) {
        let merged = merge_axis_activity(a, b);
        prop_assert!(merged.index() >= a.index() && merged.index() >= b.index());
        prop_assert!(merged == a || merged == b);
        prop_assert_eq!(merged, merge_axis_activity(b, a));
    }
}

const WINDOW: usize = 25;

fn construction(pattern: Pattern) -> GroupSpec {
    let mut g = GroupSpec {
        size: 3,
        pattern,
        anchor: [0.0, 0.0],
        velocity: [0.0, 0.0],
        rate: None,
        spacing: 2.0,
        axis: [1.0, 0.5],
    };
    match pattern {
        Pattern::Walking => g.velocity = [1.2, -0.4],
        Pattern::Approaching => g.rate = Some(0.8),
        Pattern::Splitting => g.rate = Some(1.05),
        Pattern::Stationary => {}
    }
    g
}

fn label(tracks: &TrackSet<f64>) -> (Activity, [Option<f64>; 2]) {
    let members: Vec<_> = tracks.agents().collect();
    let g = classify_group(
        tracks,
        &members,
        WINDOW as u32 - 1,
        WINDOW,
        0.0,
        &ActivityBands::default(),
        &DynamicsConfig::default(),
        &SolverConfig::default(),
    )
    .unwrap();
    (g.label, g.mu)
}

fn scene(pattern: Pattern) -> TrackSet<f64> {
    let spec = ScenarioSpec { groups: vec![construction(pattern)], frames: WINDOW, noise_sigma: 0.0, seed: 0, isolation_radius: None };
    generate(&spec).unwrap().tracks
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn labels_survive_translation(dx in -50.0..50.0f64, dy in -50.0..50.0f64) {
        for pattern in [Pattern::Stationary, Pattern::Walking, Pattern::Approaching, Pattern::Splitting] {
            let tracks = scene(pattern);
            let moved = tracks.map_positions(|[x, y]| [x + dx, y + dy]);
            prop_assert_eq!(label(&moved).0, label(&tracks).0);
            prop_assert_eq!(label(&tracks).0, pattern.activity());
        }
    }

    #[test]
    fn eigenvalues_survive_scaling(s in 0.2..5.0f64) {
        for pattern in [Pattern::Stationary, Pattern::Walking, Pattern::Approaching, Pattern::Splitting] {
            let tracks = scene(pattern);
            let (l0, mu0) = label(&tracks);
            let (l1, mu1) = label(&tracks.map_positions(|[x, y]| [x * s, y * s]));
            prop_assert_eq!(l0, l1);
            for (a, b) in mu0.iter().zip(&mu1) {
                match (a, b) {
                    (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-6),
                    (None, None) => {}
                    _ => prop_assert!(false, "deciding mode appeared or vanished: {:?} vs {:?}", mu0, mu1),
                }
            }
        }
    }
}

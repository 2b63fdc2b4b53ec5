mod common;

use std::collections::BTreeSet;

use crowd_core::dynamics::DynamicsConfig;
use crowd_core::estimator::{estimate_scene, EstimatorConfig};
use crowd_core::grouping::{cluster, detect_groups, merge_axis_labels, Embedding, GroupingConfig};
use crowd_core::tracks::TrackSet;
use crowd_core::{AgentId, GroupPartition};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn as_sets(p: &GroupPartition) -> BTreeSet<BTreeSet<AgentId>> {
    p.groups().into_iter().map(|g| g.into_iter().collect()).collect()
}

/// Points drawn near a few centers so that clusters actually form.
fn arb_embedding() -> impl Strategy<Value = Embedding<f64>> {
    (2usize..12, 1usize..4)
        .prop_flat_map(|(n, r)| {
            (
                prop::collection::vec(0usize..3, n),
                prop::collection::vec(-1.0..1.0f64, 3 * r),
                prop::collection::vec(-0.05..0.05f64, n * r),
                Just((n, r)),
            )
        })
        .prop_map(|(which, centers, jitter, (n, r))| Embedding {
            agents: (1..=n as u32).map(AgentId).collect(),
            points: DMatrix::from_fn(n, r, |i, j| centers[which[i] * r + j] + jitter[i * r + j]),
            threshold: 0.9,
            from_subspace: false,
        })
}

proptest! {
    #[test]
    fn cluster_ignores_global_sign(e in arb_embedding(), c in 0.01..0.5f64) {
        let flipped = Embedding { points: -&e.points, ..e.clone() };
        prop_assert_eq!(cluster(&e, c).unwrap(), cluster(&flipped, c).unwrap());
    }

    #[test]
    fn cluster_is_permutation_equivariant(e in arb_embedding(), c in 0.01..0.5f64, seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let n = e.agents.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut common::rng(seed));
        let shuffled = Embedding {
            agents: order.iter().map(|&i| e.agents[i]).collect(),
            points: DMatrix::from_fn(n, e.points.ncols(), |i, j| e.points[(order[i], j)]),
            ..e.clone()
        };
        prop_assert_eq!(cluster(&e, c).unwrap(), cluster(&shuffled, c).unwrap());
    }

    #[test]
    fn merged_partition_refines_both(
        (zx, zy) in (1usize..20).prop_flat_map(|n| (prop::collection::vec(0usize..4, n), prop::collection::vec(0usize..4, n)))
    ) {
        let agents: Vec<AgentId> = (0..zx.len() as u32).map(AgentId).collect();
        let px = GroupPartition::from_labels(0, &agents, &zx).unwrap();
        let py = GroupPartition::from_labels(0, &agents, &zy).unwrap();
        let merged = merge_axis_labels(&px, &py).unwrap();
        prop_assert!(merged.refines(&px));
        prop_assert!(merged.refines(&py));
        // and it is the coarsest such partition
        for (i, a) in agents.iter().enumerate() {
            for b in &agents[i + 1..] {
                let together = px.label_of(*a) == px.label_of(*b) && py.label_of(*a) == py.label_of(*b);
                prop_assert_eq!(merged.label_of(*a) == merged.label_of(*b), together);
            }
        }
    }
}

/// Renames every agent through `f`, keeping the positions.
fn rename(tracks: &TrackSet<f64>, f: impl Fn(AgentId) -> AgentId) -> TrackSet<f64> {
    let obs = tracks.observations().into_iter().map(|o| (o.frame, f(AgentId(o.agent_id)), o.x, o.y));
    TrackSet::from_observations(obs).unwrap()
}

#[test]
fn detection_follows_agent_renaming() {
    let config = EstimatorConfig::default();
    for seed in 0..20u64 {
        let scene = common::mixed_scene(seed, 2 + seed as usize % 3, 0.05, 30);
        let n = scene.tracks.num_agents() as u32;
        // reverse the id order so every regressor changes position
        let flip = |a: AgentId| AgentId(n + 1 - a.0);
        let detect = |t: &TrackSet<f64>| {
            let model = estimate_scene(t, 29, None, &config).unwrap();
            detect_groups(&model, &GroupingConfig::default(), &DynamicsConfig::default()).unwrap()
        };
        let original = detect(&scene.tracks);
        let renamed = detect(&rename(&scene.tracks, flip));
        let mapped: BTreeSet<BTreeSet<AgentId>> =
            as_sets(&original).into_iter().map(|g| g.into_iter().map(flip).collect()).collect();
        assert_eq!(mapped, as_sets(&renamed), "seed {seed}");
    }
}

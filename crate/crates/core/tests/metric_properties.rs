use crowd_core::metrics::{nmi, nmi_labels, purity, purity_labels, rand_index, rand_index_labels};
use crowd_core::{AgentId, GroupPartition};
use proptest::prelude::*;

fn labels_pair() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (2usize..30).prop_flat_map(|n| (prop::collection::vec(0usize..6, n), prop::collection::vec(0usize..6, n)))
}

/// Renames labels through an injective map.
fn relabel(labels: &[usize], shift: usize) -> Vec<usize> {
    labels.iter().map(|&l| (l * 7 + shift) % 1000 + 1000).collect()
}

fn part(labels: &[usize]) -> GroupPartition {
    let agents: Vec<AgentId> = (0..labels.len() as u32).map(AgentId).collect();
    GroupPartition::from_labels(0, &agents, labels).unwrap()
}

proptest! {
    #[test]
    fn invariant_to_relabeling_either_side((p, t) in labels_pair(), shift in 0usize..100) {
        let (p2, t2) = (relabel(&p, shift), relabel(&t, shift + 3));
        prop_assert_eq!(rand_index_labels(&p2, &t), rand_index_labels(&p, &t));
        prop_assert_eq!(rand_index_labels(&p, &t2), rand_index_labels(&p, &t));
        prop_assert_eq!(purity_labels(&p2, &t2), purity_labels(&p, &t));
        prop_assert!((nmi_labels(&p2, &t) - nmi_labels(&p, &t)).abs() < 1e-12);
        prop_assert!((nmi_labels(&p, &t2) - nmi_labels(&p, &t)).abs() < 1e-12);
    }

    #[test]
    fn nmi_and_rand_index_are_symmetric((p, t) in labels_pair()) {
        prop_assert_eq!(rand_index_labels(&p, &t), rand_index_labels(&t, &p));
        prop_assert!((nmi_labels(&p, &t) - nmi_labels(&t, &p)).abs() < 1e-12);
    }

    #[test]
    fn scores_lie_in_unit_interval((p, t) in labels_pair()) {
        for v in [nmi_labels(&p, &t), purity_labels(&p, &t), rand_index_labels(&p, &t)] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn self_agreement_is_perfect(p in prop::collection::vec(0usize..5, 2..30)) {
        let a = part(&p);
        prop_assert_eq!(nmi(&a, &a).unwrap(), 1.0);
        prop_assert_eq!(purity(&a, &a).unwrap(), 1.0);
        prop_assert_eq!(rand_index(&a, &a).unwrap(), 1.0);
    }
}

#[test]
fn purity_is_not_symmetric() {
    let singletons = [1, 2, 3, 4];
    let one = [1, 1, 1, 1];
    assert_eq!(purity_labels(&singletons, &one), 1.0);
    assert_eq!(purity_labels(&one, &singletons), 0.25);
}

#[test]
fn one_cluster_against_balanced_truth() {
    for k in 1..=6usize {
        let truth: Vec<usize> = (0..k * 4).map(|i| i % k).collect();
        let one = vec![0; truth.len()];
        assert!((purity_labels(&one, &truth) - 1.0 / k as f64).abs() < 1e-15);
    }
}

//! Partition agreement scores and activity confusion matrices.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::activity::Activity;
use crate::error::{Error, Result};
use crate::grouping::GroupPartition;

/// Contingency counts `n[i][j]` between predicted cluster `i` and true cluster `j`.
fn contingency(pred: &[usize], truth: &[usize]) -> (Vec<Vec<u64>>, Vec<u64>, Vec<u64>) {
    let index = |labels: &[usize]| {
        let mut m = BTreeMap::new();
        for &l in labels {
            let next = m.len();
            m.entry(l).or_insert(next);
        }
        m
    };
    let (pi, ti) = (index(pred), index(truth));
    let mut table = vec![vec![0u64; ti.len()]; pi.len()];
    for (p, t) in pred.iter().zip(truth) {
        table[pi[p]][ti[t]] += 1;
    }
    let rows = table.iter().map(|r| r.iter().sum()).collect();
    let cols = (0..ti.len()).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    (table, rows, cols)
}

fn check(pred: &GroupPartition, truth: &GroupPartition) -> Result<()> {
    if pred.agents() != truth.agents() {
        return Err(Error::AgentMismatch);
    }
    if pred.is_empty() {
        return Err(Error::NoAgents);
    }
    Ok(())
}

fn entropy(counts: &[u64], n: f64) -> f64 {
    counts.iter().filter(|&&c| c > 0).map(|&c| {
        let p = c as f64 / n;
        -p * p.ln()
    }).sum()
}

/// Normalized mutual information with the arithmetic mean of the two entropies.
/// Partitions that agree up to relabeling, single-cluster ones included, score exactly 1.
pub fn nmi_labels(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len() as f64;
    let (table, rows, cols) = contingency(pred, truth);
    let (hp, ht) = (entropy(&rows, n), entropy(&cols, n));
    // identical up to relabeling; avoids a ratio that rounds just below 1
    let one_to_one = rows.len() == cols.len() && table.iter().all(|r| r.iter().filter(|&&c| c > 0).count() == 1);
    if one_to_one {
        return 1.0;
    }
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    (mi / ((hp + ht) / 2.0)).clamp(0.0, 1.0)
}

pub fn purity_labels(pred: &[usize], truth: &[usize]) -> f64 {
    let (table, _, _) = contingency(pred, truth);
    let hits: u64 = table.iter().map(|r| r.iter().copied().max().unwrap_or(0)).sum();
    hits as f64 / pred.len() as f64
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

pub fn rand_index_labels(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len() as u64;
    let (table, rows, cols) = contingency(pred, truth);
    let both: u64 = table.iter().flatten().map(|&c| pairs(c)).sum();
    let same_pred: u64 = rows.iter().map(|&c| pairs(c)).sum();
    let same_truth: u64 = cols.iter().map(|&c| pairs(c)).sum();
    let total = pairs(n);
    // agreements = pairs together in both + pairs apart in both
    let apart_both = total + both - same_pred - same_truth;
    (both + apart_both) as f64 / total as f64
}

pub fn nmi(pred: &GroupPartition, truth: &GroupPartition) -> Result<f64> {
    check(pred, truth)?;
    Ok(nmi_labels(pred.labels(), truth.labels()))
}

pub fn purity(pred: &GroupPartition, truth: &GroupPartition) -> Result<f64> {
    check(pred, truth)?;
    Ok(purity_labels(pred.labels(), truth.labels()))
}

pub fn rand_index(pred: &GroupPartition, truth: &GroupPartition) -> Result<f64> {
    check(pred, truth)?;
    if pred.len() < 2 {
        return Err(Error::InsufficientData("rand index needs at least 2 agents".into()));
    }
    Ok(rand_index_labels(pred.labels(), truth.labels()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivityScore {
    /// `confusion[truth][pred]`, in `Activity::ALL` order.
    pub confusion: [[u64; 4]; 4],
    /// Row-wise accuracy; `None` for classes absent from the truth.
    pub per_class: [Option<f64>; 4],
    pub accuracy: f64,
}

pub fn score_activities(pred: &[Activity], truth: &[Activity]) -> Result<ActivityScore> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension { expected: truth.len(), found: pred.len() });
    }
    if pred.is_empty() {
        return Err(Error::InsufficientData("no activities to score".into()));
    }
    let mut confusion = [[0u64; 4]; 4];
    for (p, t) in pred.iter().zip(truth) {
        confusion[t.index()][p.index()] += 1;
    }
    let per_class = std::array::from_fn(|i| {
        let row: u64 = confusion[i].iter().sum();
        (row > 0).then(|| confusion[i][i] as f64 / row as f64)
    });
    let trace: u64 = (0..4).map(|i| confusion[i][i]).sum();
    Ok(ActivityScore { confusion, per_class, accuracy: trace as f64 / pred.len() as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracks::AgentId;

    fn part(labels: &[usize]) -> GroupPartition {
        let agents: Vec<AgentId> = (1..=labels.len() as u32).map(AgentId).collect();
        GroupPartition::from_labels(0, &agents, labels).unwrap()
    }

    #[test]
    fn rand_index_example() {
        assert_eq!(rand_index(&part(&[1, 1, 2]), &part(&[1, 2, 2])).unwrap(), 1.0 / 3.0);
        assert_eq!(rand_index(&part(&[1, 2, 2, 3]), &part(&[1, 2, 2, 3])).unwrap(), 1.0);
        assert!(rand_index(&part(&[1]), &part(&[1])).is_err());
    }

    #[test]
    fn purity_examples() {
        let truth = part(&[1, 1, 2, 2, 3, 3]);
        assert_eq!(purity(&truth, &truth).unwrap(), 1.0);
        assert!((purity(&part(&[1; 6]), &truth).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(purity(&part(&[1, 2, 3, 4, 5, 6]), &truth).unwrap(), 1.0);
    }

    #[test]
    fn nmi_examples() {
        let p = part(&[1, 1, 2, 3, 3]);
        assert_eq!(nmi(&p, &part(&[2, 2, 3, 1, 1])).unwrap(), 1.0);
        assert_eq!(nmi(&part(&[1, 2, 3, 4]), &part(&[1, 1, 1, 1])).unwrap(), 0.0);
        assert_eq!(nmi(&part(&[1, 1]), &part(&[1, 1])).unwrap(), 1.0);
        let a = part(&[1, 1, 2, 2, 3]);
        let b = part(&[1, 2, 2, 3, 3]);
        assert!((nmi(&a, &b).unwrap() - nmi(&b, &a).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn mismatched_agents() {
        let a = part(&[1, 1]);
        let b = part(&[1, 1, 2]);
        assert!(matches!(nmi(&a, &b), Err(Error::AgentMismatch)));
    }

    #[test]
    fn confusion_matrix() {
        use Activity::*;
        let truth = [Stationary, Approaching, Walking, Splitting];
        let perfect = score_activities(&truth, &truth).unwrap();
        assert_eq!(perfect.accuracy, 1.0);
        for i in 0..4 {
            assert_eq!(perfect.confusion[i][i], 1);
        }
        let walking = score_activities(&[Walking; 4], &truth).unwrap();
        for i in 0..4 {
            assert_eq!(walking.confusion[i][Walking.index()], 1);
        }
        assert_eq!(walking.accuracy, 0.25);
        assert_eq!(walking.per_class[Walking.index()], Some(1.0));
    }
}

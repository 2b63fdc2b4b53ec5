//! Spectral group detection on the estimated interaction matrix.

use std::collections::BTreeMap;

use nalgebra::{ComplexField, DMatrix};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dynamics::{DynamicsConfig, InteractionModel};
use crate::eigen::{condition_number, eigen_decompose, invariant_subspace};
use crate::error::{Error, Result};
use crate::estimator::SceneModel;
use crate::scalar::Scalar;
use crate::tracks::{AgentId, Axis, Frame};

/// Assignment of agents to groups at one instant.
///
/// Agents are kept sorted by id and labels are dense from 1, numbered in
/// order of each group's smallest agent id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupPartition {
    pub frame: Frame,
    agents: Vec<AgentId>,
    labels: Vec<usize>,
}

impl GroupPartition {
    /// Builds a partition from arbitrary labels; labels are renumbered canonically.
    pub fn from_labels(frame: Frame, agents: &[AgentId], labels: &[usize]) -> Result<Self> {
        if agents.len() != labels.len() {
            return Err(Error::Dimension { expected: agents.len(), found: labels.len() });
        }
        let mut pairs: Vec<(AgentId, usize)> = agents.iter().copied().zip(labels.iter().copied()).collect();
        pairs.sort_by_key(|p| p.0);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::AgentMismatch);
        }
        let mut remap = BTreeMap::new();
        let mut out = Vec::with_capacity(pairs.len());
        for &(_, l) in &pairs {
            let next = remap.len() + 1;
            out.push(*remap.entry(l).or_insert(next));
        }
        Ok(Self { frame, agents: pairs.into_iter().map(|p| p.0).collect(), labels: out })
    }

    pub fn from_groups(frame: Frame, groups: &[Vec<AgentId>]) -> Result<Self> {
        let (agents, labels): (Vec<AgentId>, Vec<usize>) =
            groups.iter().enumerate().flat_map(|(g, m)| m.iter().map(move |&a| (a, g + 1))).unzip();
        Self::from_labels(frame, &agents, &labels)
    }

    pub fn singletons(frame: Frame, agents: &[AgentId]) -> Result<Self> {
        let labels: Vec<usize> = (1..=agents.len()).collect();
        Self::from_labels(frame, agents, &labels)
    }

    pub fn agents(&self) -> &[AgentId] {
        &self.agents
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn num_groups(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    pub fn label_of(&self, agent: AgentId) -> Option<usize> {
        self.agents.binary_search(&agent).ok().map(|i| self.labels[i])
    }

    /// Members of each group, in label order.
    pub fn groups(&self) -> Vec<Vec<AgentId>> {
        let mut out = vec![Vec::new(); self.num_groups()];
        for (&a, &l) in self.agents.iter().zip(&self.labels) {
            out[l - 1].push(a);
        }
        out
    }

    /// True when every group of `self` lies inside one group of `other`.
    pub fn refines(&self, other: &GroupPartition) -> bool {
        if self.agents != other.agents {
            return false;
        }
        let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
        self.labels.iter().zip(&other.labels).all(|(&a, &b)| *seen.entry(a).or_insert(b) == b)
    }
}

#[derive(Serialize, Deserialize)]
struct PartitionRepr {
    frame: Frame,
    groups: Vec<Vec<AgentId>>,
}

impl Serialize for GroupPartition {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PartitionRepr { frame: self.frame, groups: self.groups() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for GroupPartition {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = PartitionRepr::deserialize(d)?;
        GroupPartition::from_groups(repr.frame, &repr.groups).map_err(serde::de::Error::custom)
    }
}

/// Per-agent coordinates in the span of the significant eigenvectors.
#[derive(Clone, Debug)]
pub struct Embedding<T: Scalar> {
    pub agents: Vec<AgentId>,
    /// One row per agent.
    pub points: DMatrix<T>,
    pub threshold: T,
    /// Whether the invariant-subspace basis replaced the eigenvectors.
    pub from_subspace: bool,
}

impl<T: Scalar> Embedding<T> {
    pub fn rank(&self) -> usize {
        self.points.ncols()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "T: Scalar")]
pub struct GroupingConfig<T> {
    /// Relative link distance.
    pub c: T,
    /// Minimum eigenvalue modulus of an embedding direction.
    pub threshold: T,
}

impl<T: Scalar> Default for GroupingConfig<T> {
    fn default() -> Self {
        Self { c: T::lit(0.1), threshold: T::lit(0.9) }
    }
}

impl<T: Scalar> GroupingConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > T::zero()) || !self.c.is_finite_value() {
            return Err(Error::Config("grouping c must be positive".into()));
        }
        if !(self.threshold >= T::zero()) || !self.threshold.is_finite_value() {
            return Err(Error::Config("significance threshold must be non-negative".into()));
        }
        Ok(())
    }
}

pub fn embed<T: Scalar>(model: &InteractionModel<T>, threshold: T, dynamics: &DynamicsConfig<T>) -> Embedding<T> {
    let n = model.dim();
    let sys = eigen_decompose(&model.a);
    let significant = |m: T| m >= threshold;
    let defective = !(condition_number(&sys.vectors) <= dynamics.condition_bound);
    if defective {
        let basis = invariant_subspace(&model.a, |l| significant(l.modulus()));
        return Embedding { agents: model.agents.clone(), points: basis, threshold, from_subspace: true };
    }
    let mut columns: Vec<Vec<T>> = Vec::new();
    for (i, lambda) in sys.values.iter().enumerate() {
        if !significant(lambda.modulus()) || lambda.im < T::zero() {
            continue;
        }
        let v = sys.vectors.column(i);
        columns.push(v.iter().map(|c| c.re).collect());
        if lambda.im > T::zero() {
            columns.push(v.iter().map(|c| c.im).collect());
        }
    }
    let points = DMatrix::from_fn(n, columns.len(), |r, c| columns[c][r]);
    Embedding { agents: model.agents.clone(), points, threshold, from_subspace: false }
}

/// Links agents whose embedding points are within `c` times the smaller norm
/// and returns the connected components.
pub fn cluster<T: Scalar>(embedding: &Embedding<T>, c: T) -> Result<GroupPartition> {
    let n = embedding.agents.len();
    let z = &embedding.points;
    let norms: Vec<T> = (0..n).map(|i| z.row(i).norm()).collect();
    let floor = T::lit(1e-12);
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            let d = (z.row(i) - z.row(j)).norm();
            let bound = if norms[i] < floor && norms[j] < floor { c } else { c * norms[i].min(norms[j]) };
            if d <= bound {
                uf.union(i, j);
            }
        }
    }
    let labels: Vec<usize> = (0..n).map(|i| uf.find(i)).collect();
    GroupPartition::from_labels(0, &embedding.agents, &labels)
}

/// Two agents share a merged group iff they share a group on both axes.
pub fn merge_axis_labels(zx: &GroupPartition, zy: &GroupPartition) -> Result<GroupPartition> {
    if zx.agents != zy.agents {
        return Err(Error::AgentMismatch);
    }
    let mut pairs: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let labels: Vec<usize> = zx
        .labels
        .iter()
        .zip(&zy.labels)
        .map(|(&a, &b)| {
            let next = pairs.len() + 1;
            *pairs.entry((a, b)).or_insert(next)
        })
        .collect();
    GroupPartition::from_labels(zx.frame, &zx.agents, &labels)
}

/// Groups at the scene model's end frame: spectral clusters on each axis,
/// intersected, then split into spatially connected pieces.
pub fn detect_groups<T: Scalar>(
    scene: &SceneModel<T>,
    config: &GroupingConfig<T>,
    dynamics: &DynamicsConfig<T>,
) -> Result<GroupPartition> {
    config.validate()?;
    let per_axis: Vec<GroupPartition> = Axis::BOTH
        .iter()
        .map(|&axis| cluster(&embed(scene.model(axis), config.threshold, dynamics), config.c))
        .collect::<Result<_>>()?;
    let merged = merge_axis_labels(&per_axis[0], &per_axis[1])?;
    let mut pieces = Vec::new();
    for members in merged.groups() {
        pieces.extend(scene.neighbors.components_within(&members));
    }
    GroupPartition::from_groups(scene.end_frame, &pieces)
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, i: usize) -> usize {
        let mut root = i;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = i;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

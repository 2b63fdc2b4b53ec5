//! Random forest of Gini-split decision trees with bootstrap aggregation and
//! out-of-bag error.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub num_trees: usize,
    /// Features examined per split.
    pub m: usize,
    /// Minimum total sample weight in a leaf.
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { num_trees: 100, m: 4, min_leaf: 1, max_depth: None }
    }
}

impl ForestConfig {
    pub fn validate(&self, num_features: usize) -> Result<()> {
        if self.num_trees == 0 {
            return Err(Error::Config("num_trees must be positive".into()));
        }
        if self.m == 0 || self.m > num_features {
            return Err(Error::Config(format!("m must be between 1 and {num_features}, got {}", self.m)));
        }
        if self.min_leaf == 0 {
            return Err(Error::Config("min_leaf must be positive".into()));
        }
        Ok(())
    }
}

/// A split node (`feature`, `threshold`, children) or a leaf (`leaf_class`).
/// Samples with `x[feature] <= threshold` go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Node<T: Scalar> {
    pub feature: Option<usize>,
    pub threshold: Option<T>,
    pub left: Option<usize>,
    pub right: Option<usize>,
    pub leaf_class: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Tree<T: Scalar> {
    pub nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tree<T> {
    pub fn predict(&self, x: &[T]) -> usize {
        let mut i = 0;
        loop {
            let node = &self.nodes[i];
            match (node.feature, node.threshold, node.left, node.right) {
                (Some(f), Some(t), Some(l), Some(r)) => i = if x[f] <= t { l } else { r },
                _ => return node.leaf_class.unwrap_or(0),
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go<T: Scalar>(t: &Tree<T>, i: usize) -> usize {
            match (t.nodes[i].left, t.nodes[i].right) {
                (Some(l), Some(r)) => 1 + go(t, l).max(go(t, r)),
                _ => 0,
            }
        }
        go(self, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Forest<T: Scalar> {
    pub num_classes: usize,
    pub num_features: usize,
    pub m: usize,
    pub seed: u64,
    pub oob_error: Option<f64>,
    pub importances: Vec<f64>,
    pub trees: Vec<Tree<T>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    pub votes: Vec<usize>,
}

/// Forest together with each tree's bootstrap multiplicities.
pub struct TrainingRun<T: Scalar> {
    pub forest: Forest<T>,
    /// `in_bag[t][i]`: how many times sample `i` was drawn for tree `t`.
    pub in_bag: Vec<Vec<u32>>,
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

fn check_dataset<T: Scalar>(samples: &[Vec<T>], labels: &[usize], num_classes: usize) -> Result<usize> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    if samples.len() != labels.len() {
        return Err(Error::Dimension { expected: samples.len(), found: labels.len() });
    }
    let width = samples[0].len();
    for s in samples {
        if s.len() != width {
            return Err(Error::FeatureLength { expected: width, found: s.len() });
        }
        if s.iter().any(|v| !v.is_finite_value()) {
            return Err(Error::NonFinite("training features"));
        }
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::Config(format!("class index {bad} out of range")));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::DegenerateTraining);
    }
    Ok(width)
}

pub fn train<T: Scalar>(
    samples: &[Vec<T>],
    labels: &[usize],
    num_classes: usize,
    config: &ForestConfig,
    seed: u64,
) -> Result<Forest<T>> {
    Ok(train_with_bootstrap(samples, labels, num_classes, config, seed)?.forest)
}

pub fn train_with_bootstrap<T: Scalar>(
    samples: &[Vec<T>],
    labels: &[usize],
    num_classes: usize,
    config: &ForestConfig,
    seed: u64,
) -> Result<TrainingRun<T>> {
    let width = check_dataset(samples, labels, num_classes)?;
    config.validate(width)?;
    let n = samples.len();
    let grown: Vec<(Tree<T>, Vec<f64>, Vec<u32>)> = (0..config.num_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(seed, t);
            let mut counts = vec![0u32; n];
            for _ in 0..n {
                counts[rng.gen_range(0..n)] += 1;
            }
            let (tree, imp) = fit_tree(samples, labels, &counts, num_classes, config, &mut rng);
            (tree, imp, counts)
        })
        .collect();

    let mut importances = vec![0.0; width];
    let mut trees = Vec::with_capacity(grown.len());
    let mut in_bag = Vec::with_capacity(grown.len());
    for (tree, imp, counts) in grown {
        for (a, b) in importances.iter_mut().zip(imp) {
            *a += b;
        }
        trees.push(tree);
        in_bag.push(counts);
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        importances.iter_mut().for_each(|v| *v /= total);
    } else {
        importances.iter_mut().for_each(|v| *v = 1.0 / width as f64);
    }

    let mut forest = Forest { num_classes, num_features: width, m: config.m, seed, oob_error: None, importances, trees };
    forest.oob_error = oob_error(&forest, samples, labels, &in_bag);
    Ok(TrainingRun { forest, in_bag })
}

fn oob_error<T: Scalar>(forest: &Forest<T>, samples: &[Vec<T>], labels: &[usize], in_bag: &[Vec<u32>]) -> Option<f64> {
    let mut wrong = 0usize;
    let mut seen = 0usize;
    for (i, x) in samples.iter().enumerate() {
        let mut votes = vec![0usize; forest.num_classes];
        for (tree, counts) in forest.trees.iter().zip(in_bag) {
            if counts[i] == 0 {
                votes[tree.predict(x)] += 1;
            }
        }
        if votes.iter().any(|&v| v > 0) {
            seen += 1;
            if argmax(&votes) != labels[i] {
                wrong += 1;
            }
        }
    }
    (seen > 0).then(|| wrong as f64 / seen as f64)
}

/// Index of the largest entry; the lowest index wins ties.
fn argmax<V: PartialOrd + Copy>(values: &[V]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn gini(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|&c| (c / total) * (c / total)).sum::<f64>()
}

struct Split<T> {
    feature: usize,
    threshold: T,
    gain: f64,
}

/// Grows one tree on the samples with positive `counts`, each weighted by its count.
/// Returns the tree and its per-feature weighted impurity decrease.
pub fn fit_tree<T: Scalar>(
    samples: &[Vec<T>],
    labels: &[usize],
    counts: &[u32],
    num_classes: usize,
    config: &ForestConfig,
    rng: &mut ChaCha8Rng,
) -> (Tree<T>, Vec<f64>) {
    let width = samples[0].len();
    let root: Vec<usize> = (0..samples.len()).filter(|&i| counts[i] > 0).collect();
    let root_weight: f64 = root.iter().map(|&i| counts[i] as f64).sum();
    let mut importance = vec![0.0; width];
    let mut nodes: Vec<Node<T>> = Vec::new();
    // (node index, members, depth)
    let mut stack = vec![(0usize, root, 0usize)];
    nodes.push(leaf(0));
    while let Some((id, members, depth)) = stack.pop() {
        let mut class_w = vec![0.0; num_classes];
        for &i in &members {
            class_w[labels[i]] += counts[i] as f64;
        }
        let total: f64 = class_w.iter().sum();
        nodes[id] = leaf(argmax(&class_w));
        let impurity = gini(&class_w, total);
        let depth_ok = config.max_depth.map_or(true, |d| depth < d);
        if impurity <= 0.0 || !depth_ok || total < 2.0 * config.min_leaf as f64 {
            continue;
        }
        let Some(split) = best_split(samples, labels, counts, &members, num_classes, config, impurity * total, rng)
        else {
            continue;
        };
        importance[split.feature] += split.gain / root_weight;
        let (l, r): (Vec<usize>, Vec<usize>) =
            members.into_iter().partition(|&i| samples[i][split.feature] <= split.threshold);
        let li = nodes.len();
        nodes.push(leaf(0));
        let ri = nodes.len();
        nodes.push(leaf(0));
        nodes[id] = Node {
            feature: Some(split.feature),
            threshold: Some(split.threshold),
            left: Some(li),
            right: Some(ri),
            leaf_class: None,
        };
        // right pushed first so the left subtree is expanded first
        stack.push((ri, r, depth + 1));
        stack.push((li, l, depth + 1));
    }
    (Tree { nodes }, importance)
}

fn leaf<T: Scalar>(class: usize) -> Node<T> {
    Node { feature: None, threshold: None, left: None, right: None, leaf_class: Some(class) }
}

#[allow(clippy::too_many_arguments)]
fn best_split<T: Scalar>(
    samples: &[Vec<T>],
    labels: &[usize],
    counts: &[u32],
    members: &[usize],
    num_classes: usize,
    config: &ForestConfig,
    parent: f64,
    rng: &mut ChaCha8Rng,
) -> Option<Split<T>> {
    let width = samples[0].len();
    let mut features: Vec<usize> = (0..width).collect();
    features.shuffle(rng);
    let min_leaf = config.min_leaf as f64;
    let mut best: Option<Split<T>> = None;
    let mut examined = 0;
    let mut order = members.to_vec();
    for &f in &features {
        if examined >= config.m {
            break;
        }
        order.sort_by(|&a, &b| samples[a][f].partial_cmp(&samples[b][f]).expect("finite features"));
        let lo = samples[order[0]][f];
        let hi = samples[order[order.len() - 1]][f];
        if lo == hi {
            continue;
        }
        examined += 1;
        let mut left = vec![0.0; num_classes];
        let mut right = vec![0.0; num_classes];
        for &i in &order {
            right[labels[i]] += counts[i] as f64;
        }
        let total: f64 = right.iter().sum();
        let mut wl = 0.0;
        for k in 0..order.len() - 1 {
            let i = order[k];
            let w = counts[i] as f64;
            left[labels[i]] += w;
            right[labels[i]] -= w;
            wl += w;
            let (v, next) = (samples[i][f], samples[order[k + 1]][f]);
            if v == next {
                continue;
            }
            let wr = total - wl;
            if wl < min_leaf || wr < min_leaf {
                continue;
            }
            let gain = parent - wl * gini(&left, wl) - wr * gini(&right, wr);
            let mut threshold = (v + next) * T::lit(0.5);
            if !(threshold < next) {
                threshold = v;
            }
            let better = match &best {
                None => true,
                Some(b) => {
                    gain > b.gain + 1e-12
                        || ((gain - b.gain).abs() <= 1e-12
                            && (f < b.feature || (f == b.feature && threshold < b.threshold)))
                }
            };
            if better {
                best = Some(Split { feature: f, threshold, gain: gain.max(0.0) });
            }
        }
    }
    best
}

impl<T: Scalar> Forest<T> {
    pub fn predict(&self, x: &[T]) -> Result<Prediction> {
        if self.trees.is_empty() {
            return Err(Error::Untrained);
        }
        if x.len() != self.num_features {
            return Err(Error::FeatureLength { expected: self.num_features, found: x.len() });
        }
        let mut votes = vec![0usize; self.num_classes];
        for tree in &self.trees {
            votes[tree.predict(x)] += 1;
        }
        Ok(Prediction { class: argmax(&votes), votes })
    }

    pub fn feature_importance(&self) -> Result<&[f64]> {
        if self.trees.is_empty() {
            return Err(Error::Untrained);
        }
        Ok(&self.importances)
    }

    /// Structural checks for a forest read from disk.
    pub fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::Untrained);
        }
        if self.importances.len() != self.num_features {
            return Err(Error::Config("importance vector length does not match feature count".into()));
        }
        for (t, tree) in self.trees.iter().enumerate() {
            if tree.nodes.is_empty() {
                return Err(Error::Config(format!("tree {t} has no nodes")));
            }
            for (i, node) in tree.nodes.iter().enumerate() {
                let bad = match (node.feature, node.threshold, node.left, node.right, node.leaf_class) {
                    (Some(f), Some(th), Some(l), Some(r), None) => {
                        f >= self.num_features
                            || !th.is_finite_value()
                            || l <= i
                            || r <= i
                            || l >= tree.nodes.len()
                            || r >= tree.nodes.len()
                    }
                    (None, None, None, None, Some(c)) => c >= self.num_classes,
                    _ => true,
                };
                if bad {
                    return Err(Error::Config(format!("tree {t} node {i} is malformed")));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let forest: Self = serde_json::from_str(s)?;
        forest.validate()?;
        Ok(forest)
    }
}

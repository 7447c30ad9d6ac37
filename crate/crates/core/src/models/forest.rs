//! Random forest of Gini-split decision trees over binary features.
//!
//! Every node stores its class distribution, sample count and impurity, so
//! the trees support both Gini importances and decision-path contribution
//! breakdowns. A split on feature `f` sends rows without `f` to `absent`
//! and rows with it to `present` (threshold 0.5).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Classifier;
use crate::corpus::ClassLabel;
use crate::error::{Error, Result};
use crate::ngram_index::BinaryFeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Minimum leaf size as a fraction of the training-set size.
    pub min_leaf_fraction: f64,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 300,
            min_leaf_fraction: 0.0001,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub(crate) fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_trees == 0 {
            out.push("forest.n_trees must be at least 1".into());
        }
        if !(self.min_leaf_fraction > 0.0 && self.min_leaf_fraction < 1.0) {
            out.push(format!(
                "forest.min_leaf_fraction must be in (0, 1) (got {})",
                self.min_leaf_fraction
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// Split feature; `None` for leaves.
    pub feature: Option<u32>,
    pub absent: u32,
    pub present: u32,
    /// Class distribution of the training samples reaching this node.
    pub value: Vec<f64>,
    pub n_samples: u32,
    pub impurity: f64,
}

impl TreeNode {
    pub fn leaf(value: Vec<f64>, n_samples: u32) -> Self {
        let impurity = gini(&value);
        TreeNode {
            feature: None,
            absent: 0,
            present: 0,
            value,
            n_samples,
            impurity,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature.is_none()
    }
}

/// Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    /// Node ids from the root to the leaf reached by `row`.
    pub fn decision_path(&self, row: &[u32]) -> Vec<usize> {
        let mut path = vec![0usize];
        let mut node = &self.nodes[0];
        while let Some(f) = node.feature {
            let next = if row.binary_search(&f).is_ok() {
                node.present
            } else {
                node.absent
            } as usize;
            path.push(next);
            node = &self.nodes[next];
        }
        path
    }

    pub fn leaf_value(&self, row: &[u32]) -> &[f64] {
        let leaf = *self.decision_path(row).last().expect("root");
        &self.nodes[leaf].value
    }

    /// Unnormalized impurity decrease per feature.
    pub(crate) fn impurity_decrease(&self, n_features: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_features];
        let root_n = self.nodes[0].n_samples.max(1) as f64;
        for node in &self.nodes {
            if let Some(f) = node.feature {
                let a = &self.nodes[node.absent as usize];
                let p = &self.nodes[node.present as usize];
                let n = node.n_samples as f64;
                let decrease = n * node.impurity - a.n_samples as f64 * a.impurity - p.n_samples as f64 * p.impurity;
                out[f as usize] += decrease / root_n;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub classes: Vec<ClassLabel>,
    pub n_features: usize,
    pub trees: Vec<DecisionTree>,
    pub config: ForestConfig,
}

impl Forest {
    /// Per-class probability from a single tree.
    pub fn tree_probabilities(&self, tree: usize, row: &[u32]) -> &[f64] {
        self.trees[tree].leaf_value(row)
    }
}

impl Classifier for Forest {
    fn classes(&self) -> &[ClassLabel] {
        &self.classes
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn probabilities_unchecked(&self, row: &[u32]) -> Vec<f64> {
        let mut acc = vec![0.0; self.classes.len()];
        for tree in &self.trees {
            for (a, v) in acc.iter_mut().zip(tree.leaf_value(row)) {
                *a += v;
            }
        }
        let n = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

fn gini(dist: &[f64]) -> f64 {
    1.0 - dist.iter().map(|p| p * p).sum::<f64>()
}

/// Rows as fixed-width bitsets for O(1) membership tests.
struct BitRows {
    words: usize,
    bits: Vec<u64>,
}

impl BitRows {
    fn new(matrix: &BinaryFeatureMatrix) -> Self {
        let words = matrix.n_features().div_ceil(64).max(1);
        let mut bits = vec![0u64; words * matrix.n_samples()];
        for (i, row) in matrix.rows().iter().enumerate() {
            for &j in row {
                bits[i * words + j as usize / 64] |= 1 << (j % 64);
            }
        }
        BitRows { words, bits }
    }

    #[inline]
    fn get(&self, sample: usize, feature: usize) -> bool {
        self.bits[sample * self.words + feature / 64] >> (feature % 64) & 1 == 1
    }
}

struct TreeBuilder<'a> {
    bits: &'a BitRows,
    labels: &'a [usize],
    n_classes: usize,
    n_features: usize,
    max_features: usize,
    min_leaf: usize,
}

impl TreeBuilder<'_> {
    fn distribution(&self, samples: &[usize]) -> Vec<f64> {
        let mut counts = vec![0.0; self.n_classes];
        for &s in samples {
            counts[self.labels[s]] += 1.0;
        }
        let n = samples.len().max(1) as f64;
        counts.iter_mut().for_each(|c| *c /= n);
        counts
    }

    fn best_split(&self, samples: &[usize], order: &mut [u32], rng: &mut ChaCha8Rng) -> Option<u32> {
        let n = samples.len();
        let mut best: Option<(f64, u32)> = None;
        let mut visited = 0;
        let mut present = vec![0usize; self.n_classes];
        let mut total = vec![0usize; self.n_classes];
        for &s in samples {
            total[self.labels[s]] += 1;
        }
        for k in 0..self.n_features {
            if visited >= self.max_features && best.is_some() {
                break;
            }
            // Lazy Fisher-Yates: order[..k] are the features drawn so far.
            let pick = rng.gen_range(k..self.n_features);
            order.swap(k, pick);
            let f = order[k] as usize;
            present.iter_mut().for_each(|p| *p = 0);
            let mut n_present = 0;
            for &s in samples {
                if self.bits.get(s, f) {
                    present[self.labels[s]] += 1;
                    n_present += 1;
                }
            }
            if n_present == 0 || n_present == n {
                continue;
            }
            visited += 1;
            let n_absent = n - n_present;
            if n_present < self.min_leaf || n_absent < self.min_leaf {
                continue;
            }
            // Weighted child Gini, scaled by n.
            let side = |count: &mut dyn Iterator<Item = usize>, size: usize| {
                let sq: f64 = count.map(|c| (c * c) as f64).sum();
                size as f64 - sq / size as f64
            };
            let score = side(&mut present.iter().copied(), n_present)
                + side(&mut present.iter().zip(&total).map(|(p, t)| t - p), n_absent);
            if best.is_none_or(|(b, _)| score < b) {
                best = Some((score, f as u32));
            }
        }
        best.map(|(_, f)| f)
    }

    fn grow(&self, samples: Vec<usize>, rng: &mut ChaCha8Rng) -> DecisionTree {
        let mut nodes = vec![TreeNode::leaf(self.distribution(&samples), samples.len() as u32)];
        let mut order: Vec<u32> = (0..self.n_features as u32).collect();
        let mut stack = vec![(0usize, samples)];
        while let Some((id, samples)) = stack.pop() {
            if nodes[id].impurity <= 0.0 || samples.len() < 2 * self.min_leaf {
                continue;
            }
            let Some(f) = self.best_split(&samples, &mut order, rng) else {
                continue;
            };
            let (with, without): (Vec<usize>, Vec<usize>) =
                samples.into_iter().partition(|&s| self.bits.get(s, f as usize));
            let absent = nodes.len();
            nodes.push(TreeNode::leaf(self.distribution(&without), without.len() as u32));
            let present = nodes.len();
            nodes.push(TreeNode::leaf(self.distribution(&with), with.len() as u32));
            let node = &mut nodes[id];
            node.feature = Some(f);
            node.absent = absent as u32;
            node.present = present as u32;
            // Present first on the stack so absent subtrees get lower ids.
            stack.push((present, with));
            stack.push((absent, without));
        }
        DecisionTree { nodes }
    }
}

/// Per-tree seed derived from the master seed (splitmix64 step).
fn tree_seed(seed: u64, tree: usize) -> u64 {
    let mut z = seed.wrapping_add((tree as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Grows `n_trees` trees, each on a bootstrap sample, considering about
/// √n_features random candidates per split.
pub fn train_forest(matrix: &BinaryFeatureMatrix, config: &ForestConfig) -> Result<Forest> {
    let problems = config.problems();
    if !problems.is_empty() {
        return Err(Error::Config { fields: problems });
    }
    let n = matrix.n_samples();
    if n == 0 {
        return Err(Error::Training("no training samples".into()));
    }
    let classes = matrix.classes();
    let labels: Vec<usize> = matrix
        .labels()
        .iter()
        .map(|l| classes.binary_search(l).expect("label from matrix"))
        .collect();
    let bits = BitRows::new(matrix);
    let n_features = matrix.n_features();
    let builder = TreeBuilder {
        bits: &bits,
        labels: &labels,
        n_classes: classes.len(),
        n_features,
        max_features: ((n_features as f64).sqrt().floor() as usize).max(1),
        min_leaf: ((config.min_leaf_fraction * n as f64).ceil() as usize).max(1),
    };
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(config.seed, t));
            let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            builder.grow(sample, &mut rng)
        })
        .collect();
    Ok(Forest {
        classes,
        n_features,
        trees,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_give_majority_leaves() {
        let m = BinaryFeatureMatrix::from_dense(&vec![vec![true, false, true]; 5], vec![1, 2, 2, 2, 2]).unwrap();
        let f = train_forest(
            &m,
            &ForestConfig {
                n_trees: 7,
                min_leaf_fraction: 0.1,
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!(f.trees.len(), 7);
        for tree in &f.trees {
            assert_eq!(tree.nodes.len(), 1);
        }
        assert_eq!(f.predict(&[0, 2]).unwrap().class, 2);
    }

    #[test]
    fn leaves_are_distributions() {
        let dense: Vec<Vec<bool>> = (0..40)
            .map(|i| (0..6).map(|j| (i * 7 + j * 3) % 5 < 2).collect())
            .collect();
        let labels = (0..40).map(|i| (i % 3) as u8 + 1).collect();
        let m = BinaryFeatureMatrix::from_dense(&dense, labels).unwrap();
        let f = train_forest(
            &m,
            &ForestConfig {
                n_trees: 10,
                min_leaf_fraction: 0.01,
                seed: 1,
            },
        )
        .unwrap();
        for tree in &f.trees {
            for node in &tree.nodes {
                assert!((node.value.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        for row in m.rows() {
            let p = f.predict(row).unwrap().probabilities;
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let dense: Vec<Vec<bool>> = (0..30).map(|i| (0..5).map(|j| (i + j) % 3 == 0).collect()).collect();
        let labels = (0..30).map(|i| (i % 2) as u8).collect();
        let m = BinaryFeatureMatrix::from_dense(&dense, labels).unwrap();
        let cfg = ForestConfig {
            n_trees: 5,
            min_leaf_fraction: 0.05,
            seed: 42,
        };
        assert_eq!(train_forest(&m, &cfg).unwrap(), train_forest(&m, &cfg).unwrap());
    }

    #[test]
    fn min_leaf_is_respected() {
        let dense: Vec<Vec<bool>> = (0..50).map(|i| vec![i % 2 == 0, i % 5 == 0, i < 3]).collect();
        let labels = (0..50).map(|i| if i < 3 { 1 } else { 2 }).collect();
        let m = BinaryFeatureMatrix::from_dense(&dense, labels).unwrap();
        let f = train_forest(
            &m,
            &ForestConfig {
                n_trees: 4,
                min_leaf_fraction: 0.2,
                seed: 0,
            },
        )
        .unwrap();
        for tree in &f.trees {
            for node in tree.nodes.iter().filter(|n| n.is_leaf()) {
                assert!(node.n_samples >= 10, "{}", node.n_samples);
            }
        }
    }

    #[test]
    fn invalid_config() {
        let m = BinaryFeatureMatrix::from_dense(&[vec![true]], vec![1]).unwrap();
        assert!(train_forest(
            &m,
            &ForestConfig {
                n_trees: 0,
                ..Default::default()
            }
        )
        .is_err());
        assert!(train_forest(
            &m,
            &ForestConfig {
                min_leaf_fraction: 1.0,
                ..Default::default()
            }
        )
        .is_err());
    }
}

use serde::Serialize;

use super::{RankedFeatures, RankingKind};
use crate::corpus::ClassLabel;
use crate::error::{Error, Result};
use crate::models::{check_row, Classifier, Forest};
use crate::ngram_index::{FeatureVocabulary, NGram};

/// Mean decrease in Gini impurity. Each tree's decreases are normalized to
/// sum to one, averaged over trees, then normalized again.
pub fn gini_importances(forest: &Forest, vocab: &FeatureVocabulary) -> Result<RankedFeatures> {
    let mut total = vec![0.0; forest.n_features];
    for tree in &forest.trees {
        let decrease = tree.impurity_decrease(forest.n_features);
        let sum: f64 = decrease.iter().sum();
        if sum > 0.0 {
            for (t, d) in total.iter_mut().zip(&decrease) {
                *t += d / sum;
            }
        }
    }
    let sum: f64 = total.iter().sum();
    if sum > 0.0 {
        total.iter_mut().for_each(|t| *t /= sum);
    }
    RankedFeatures::from_values(RankingKind::GiniImportance, None, &total, vocab)
}

/// Index of the tree giving `class` the highest probability for `row`;
/// the lowest index wins ties.
pub fn best_tree_for_sample(forest: &Forest, row: &[u32], class: ClassLabel) -> Result<usize> {
    check_row(row, forest.n_features)?;
    let c = forest.class_index(class)?;
    if forest.trees.is_empty() {
        return Err(Error::arg("forest has no trees"));
    }
    let mut best = 0;
    let mut best_p = f64::NEG_INFINITY;
    for t in 0..forest.trees.len() {
        let p = forest.tree_probabilities(t, row)[c];
        if p > best_p {
            best = t;
            best_p = p;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureContribution {
    pub column: u32,
    pub ngram: NGram,
    /// Whether the sample has the feature, i.e. which branch it took.
    pub present: bool,
    /// Per-class change in node value across this feature's splits.
    pub delta: Vec<f64>,
}

/// Decision-path decomposition of one tree's prediction:
/// `prediction = bias + Σ delta`, per class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContributionBreakdown {
    pub tree: usize,
    pub classes: Vec<ClassLabel>,
    pub bias: Vec<f64>,
    pub contributions: Vec<FeatureContribution>,
    pub prediction: Vec<f64>,
}

impl ContributionBreakdown {
    /// Largest per-class gap between `bias + Σ delta` and the prediction.
    pub fn residual(&self) -> f64 {
        (0..self.prediction.len())
            .map(|k| {
                let sum = self.bias[k] + self.contributions.iter().map(|c| c.delta[k]).sum::<f64>();
                (sum - self.prediction[k]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Share of the absolute contribution mass for class index `k`, bias
    /// first and then one share per contribution.
    pub fn shares(&self, k: usize) -> (f64, Vec<f64>) {
        let bias = self.bias[k].abs();
        let parts: Vec<f64> = self.contributions.iter().map(|c| c.delta[k].abs()).collect();
        let total = bias + parts.iter().sum::<f64>();
        if total == 0.0 {
            return (0.0, vec![0.0; parts.len()]);
        }
        (bias / total, parts.iter().map(|p| p / total).collect())
    }
}

/// Walks `row` down tree `tree`, crediting each change in node value to the
/// feature tested at the parent. The root value is the bias.
pub fn tree_contributions(
    forest: &Forest,
    tree: usize,
    row: &[u32],
    vocab: &FeatureVocabulary,
) -> Result<ContributionBreakdown> {
    check_row(row, forest.n_features)?;
    let t = forest
        .trees
        .get(tree)
        .ok_or_else(|| Error::arg(format!("tree {tree} out of range ({} trees)", forest.trees.len())))?;
    let path = t.decision_path(row);
    let bias = t.nodes[path[0]].value.clone();
    let mut contributions: Vec<FeatureContribution> = Vec::new();
    for pair in path.windows(2) {
        let (parent, child) = (&t.nodes[pair[0]], &t.nodes[pair[1]]);
        let column = parent.feature.expect("inner node on path");
        let delta: Vec<f64> = child.value.iter().zip(&parent.value).map(|(c, p)| c - p).collect();
        match contributions.iter_mut().find(|c| c.column == column) {
            Some(existing) => existing.delta.iter_mut().zip(&delta).for_each(|(e, d)| *e += d),
            None => contributions.push(FeatureContribution {
                column,
                ngram: vocab
                    .ngram(column)
                    .ok_or_else(|| Error::arg("vocabulary does not match the model"))?
                    .clone(),
                present: pair[1] == parent.present as usize,
                delta,
            }),
        }
    }
    let prediction = t.nodes[*path.last().expect("root")].value.clone();
    Ok(ContributionBreakdown {
        tree,
        classes: forest.classes.clone(),
        bias,
        contributions,
        prediction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{DecisionTree, ForestConfig, TreeNode};

    fn vocab(n: usize) -> FeatureVocabulary {
        FeatureVocabulary::from_ngrams(1, (0..n as u8).map(|b| NGram::new(vec![b])).collect()).unwrap()
    }

    fn node(feature: Option<u32>, absent: u32, present: u32, value: Vec<f64>, n: u32, impurity: f64) -> TreeNode {
        TreeNode {
            feature,
            absent,
            present,
            value,
            n_samples: n,
            impurity,
        }
    }

    /// A stump on feature `f` that separates two balanced classes.
    fn stump(f: u32) -> DecisionTree {
        DecisionTree {
            nodes: vec![
                node(Some(f), 1, 2, vec![0.5, 0.5], 4, 0.5),
                TreeNode::leaf(vec![1.0, 0.0], 2),
                TreeNode::leaf(vec![0.0, 1.0], 2),
            ],
        }
    }

    fn forest(trees: Vec<DecisionTree>, n_features: usize) -> Forest {
        Forest {
            classes: vec![1, 2],
            n_features,
            trees,
            config: ForestConfig::default(),
        }
    }

    #[test]
    fn single_stump_importance() {
        let f = forest(vec![stump(2)], 4);
        let r = gini_importances(&f, &vocab(4)).unwrap();
        assert_eq!(r.entries[0].column, 2);
        assert_eq!(r.entries[0].value, 1.0);
        assert!(r.entries[1..].iter().all(|e| e.value == 0.0));
    }

    #[test]
    fn importances_average_per_tree() {
        let f = forest(vec![stump(0), stump(1), stump(1)], 2);
        let r = gini_importances(&f, &vocab(2)).unwrap();
        assert!((r.value_of(&NGram::new(vec![1])).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn best_tree_and_ties() {
        let mut weak = stump(0);
        weak.nodes[2].value = vec![0.4, 0.6];
        let f = forest(vec![weak, stump(0), stump(0)], 1);
        assert_eq!(best_tree_for_sample(&f, &[0], 2).unwrap(), 1);
        assert_eq!(best_tree_for_sample(&f, &[], 1).unwrap(), 0);
        assert!(best_tree_for_sample(&f, &[], 7).is_err());
    }

    #[test]
    fn contributions_sum_to_prediction() {
        let tree = DecisionTree {
            nodes: vec![
                node(Some(0), 1, 2, vec![0.6, 0.4], 10, 0.48),
                TreeNode::leaf(vec![1.0, 0.0], 4),
                node(Some(1), 3, 4, vec![1.0 / 3.0, 2.0 / 3.0], 6, 4.0 / 9.0),
                TreeNode::leaf(vec![1.0, 0.0], 2),
                TreeNode::leaf(vec![0.0, 1.0], 4),
            ],
        };
        let f = forest(vec![tree], 2);
        let b = tree_contributions(&f, 0, &[0, 1], &vocab(2)).unwrap();
        assert_eq!(b.bias, vec![0.6, 0.4]);
        assert_eq!(b.contributions.len(), 2);
        assert!(b.contributions.iter().all(|c| c.present));
        assert_eq!(b.prediction, vec![0.0, 1.0]);
        assert!(b.residual() < 1e-15);
        let (bias_share, shares) = b.shares(1);
        assert!((bias_share + shares.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(tree_contributions(&f, 1, &[], &vocab(2)).is_err());
    }
}

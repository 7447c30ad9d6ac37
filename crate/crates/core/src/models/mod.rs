//! The three classifiers and what they share: prediction, balanced
//! accuracy, cross-validated grid search and the artifact container.

mod artifact;
mod cv;
mod forest;
mod logreg;
mod mlp;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::ClassLabel;
use crate::error::{Error, Result};
use crate::ngram_index::BinaryFeatureMatrix;

pub use artifact::{read_model, write_model, ARTIFACT_VERSION};
pub use cv::{cross_validate, grid_search_cv, train, GridSearchResult};
pub use forest::{train_forest, DecisionTree, Forest, ForestConfig, TreeNode};
pub use logreg::{logistic_objective, train_logreg_ovr, LogRegConfig, LogRegOvr};
pub use mlp::{train_mlp, Forward, Mlp, MlpConfig, MlpGradient};

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: ClassLabel,
    /// One entry per class in [`Classifier::classes`] order.
    pub probabilities: Vec<f64>,
}

pub trait Classifier: Sync {
    /// Class labels in output order, ascending.
    fn classes(&self) -> &[ClassLabel];

    fn n_features(&self) -> usize;

    /// Per-class scores for a sparse binary row; the row is pre-checked.
    fn probabilities_unchecked(&self, row: &[u32]) -> Vec<f64>;

    fn predict(&self, row: &[u32]) -> Result<Prediction> {
        check_row(row, self.n_features())?;
        let probabilities = self.probabilities_unchecked(row);
        let class = self.classes()[argmax(&probabilities)];
        Ok(Prediction { class, probabilities })
    }

    fn class_index(&self, class: ClassLabel) -> Result<usize> {
        self.classes()
            .iter()
            .position(|&c| c == class)
            .ok_or_else(|| Error::arg(format!("class {class} is not known to the model")))
    }

    /// Predicted labels for every row of `matrix`.
    fn predict_matrix(&self, matrix: &BinaryFeatureMatrix) -> Result<Vec<ClassLabel>> {
        if matrix.n_features() != self.n_features() {
            return Err(Error::arg(format!(
                "matrix has {} features, model expects {}",
                matrix.n_features(),
                self.n_features()
            )));
        }
        matrix
            .rows()
            .par_iter()
            .map(|r| self.predict(r).map(|p| p.class))
            .collect()
    }
}

pub(crate) fn check_row(row: &[u32], n_features: usize) -> Result<()> {
    match row.iter().find(|&&c| c as usize >= n_features) {
        Some(c) => Err(Error::arg(format!(
            "row references column {c} but the model has {n_features} features"
        ))),
        None => Ok(()),
    }
}

/// Index of the largest value; the first one wins ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[value(name = "logreg")]
    #[serde(rename = "logreg")]
    LogReg,
    Forest,
    Mlp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::LogReg => "logreg",
            ModelKind::Forest => "forest",
            ModelKind::Mlp => "mlp",
        }
    }
}

/// Hyperparameters for one model kind; stored in every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainingConfig {
    #[serde(rename = "logreg")]
    LogReg(LogRegConfig),
    Forest(ForestConfig),
    Mlp(MlpConfig),
}

impl TrainingConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainingConfig::LogReg(_) => ModelKind::LogReg,
            TrainingConfig::Forest(_) => ModelKind::Forest,
            TrainingConfig::Mlp(_) => ModelKind::Mlp,
        }
    }

    /// Names of invalid fields, empty when valid.
    pub fn problems(&self) -> Vec<String> {
        match self {
            TrainingConfig::LogReg(c) => c.problems(),
            TrainingConfig::Forest(c) => c.problems(),
            TrainingConfig::Mlp(c) => c.problems(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    #[serde(rename = "logreg")]
    LogReg(LogRegOvr),
    Forest(Forest),
    Mlp(Mlp),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::LogReg(_) => ModelKind::LogReg,
            Model::Forest(_) => ModelKind::Forest,
            Model::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn config(&self) -> TrainingConfig {
        match self {
            Model::LogReg(m) => TrainingConfig::LogReg(m.config.clone()),
            Model::Forest(m) => TrainingConfig::Forest(m.config.clone()),
            Model::Mlp(m) => TrainingConfig::Mlp(m.config.clone()),
        }
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            Model::LogReg(m) => m,
            Model::Forest(m) => m,
            Model::Mlp(m) => m,
        }
    }
}

impl Classifier for Model {
    fn classes(&self) -> &[ClassLabel] {
        self.inner().classes()
    }

    fn n_features(&self) -> usize {
        self.inner().n_features()
    }

    fn probabilities_unchecked(&self, row: &[u32]) -> Vec<f64> {
        self.inner().probabilities_unchecked(row)
    }
}

/// Unweighted mean of per-class recall over the classes present in
/// `labels`.
pub fn balanced_accuracy(predictions: &[ClassLabel], labels: &[ClassLabel]) -> Result<f64> {
    let classes: Vec<ClassLabel> = labels
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    balanced_accuracy_over(predictions, labels, &classes)
}

/// Balanced accuracy over an explicit class list; every listed class must
/// occur in `labels`.
pub fn balanced_accuracy_over(
    predictions: &[ClassLabel],
    labels: &[ClassLabel],
    classes: &[ClassLabel],
) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::arg(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if classes.is_empty() {
        return Err(Error::arg("balanced accuracy needs at least one class"));
    }
    let mut tally: BTreeMap<ClassLabel, (u64, u64)> = classes.iter().map(|&c| (c, (0, 0))).collect();
    for (&p, &y) in predictions.iter().zip(labels) {
        if let Some(t) = tally.get_mut(&y) {
            t.1 += 1;
            t.0 += (p == y) as u64;
        }
    }
    if let Some((c, _)) = tally.iter().find(|(_, t)| t.1 == 0) {
        return Err(Error::arg(format!("class {c} has no instances in the labels")));
    }
    let sum: f64 = tally.values().map(|&(hit, n)| hit as f64 / n as f64).sum();
    Ok(sum / tally.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_accuracy_examples() {
        assert_eq!(balanced_accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(balanced_accuracy(&[1, 1, 2, 1], &[1, 1, 2, 2]).unwrap(), 0.75);
        let labels = [1, 1, 2, 2, 3, 3];
        let constant = [2; 6];
        assert!((balanced_accuracy(&constant, &labels).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn balanced_accuracy_errors() {
        assert!(balanced_accuracy(&[1], &[1, 2]).is_err());
        assert!(balanced_accuracy_over(&[1, 1], &[1, 1], &[1, 2]).is_err());
    }

    #[test]
    fn argmax_prefers_first() {
        assert_eq!(argmax(&[0.2, 0.9, 0.9]), 1);
        assert_eq!(argmax(&[0.5]), 0);
    }

    #[test]
    fn stable_sigmoid_and_softplus() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) == 1.0);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
    }
}

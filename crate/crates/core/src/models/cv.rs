use serde::{Deserialize, Serialize};

use super::{balanced_accuracy_over, train_forest, train_logreg_ovr, train_mlp, Classifier, Model, TrainingConfig};
use crate::corpus::stratified_partition_indices;
use crate::error::{Error, Result};
use crate::ngram_index::BinaryFeatureMatrix;

/// Trains the model described by `config` on every row of `matrix`.
pub fn train(matrix: &BinaryFeatureMatrix, config: &TrainingConfig) -> Result<Model> {
    Ok(match config {
        TrainingConfig::LogReg(c) => Model::LogReg(train_logreg_ovr(matrix, c)?),
        TrainingConfig::Forest(c) => Model::Forest(train_forest(matrix, c)?),
        TrainingConfig::Mlp(c) => Model::Mlp(train_mlp(matrix, c)?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_index: usize,
    pub best: TrainingConfig,
    /// Mean held-out balanced accuracy per grid point, in grid order.
    pub mean_scores: Vec<f64>,
    pub fold_scores: Vec<Vec<f64>>,
}

/// Held-out balanced accuracy of `config` on each of `k_folds` stratified
/// folds.
pub fn cross_validate(
    matrix: &BinaryFeatureMatrix,
    config: &TrainingConfig,
    k_folds: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let folds = stratified_partition_indices(matrix.labels(), k_folds, seed)?;
    let classes = matrix.classes();
    folds
        .iter()
        .enumerate()
        .map(|(k, held_out)| {
            let train_idx: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .flat_map(|(_, f)| f.iter().copied())
                .collect();
            let model = train(&matrix.select_rows(&train_idx), config)?;
            let test = matrix.select_rows(held_out);
            let predictions = model.predict_matrix(&test)?;
            let present: Vec<_> = classes.iter().copied().filter(|c| test.labels().contains(c)).collect();
            balanced_accuracy_over(&predictions, test.labels(), &present)
        })
        .collect()
}

/// Picks the grid point with the best mean held-out balanced accuracy;
/// the earliest point wins ties.
pub fn grid_search_cv(
    matrix: &BinaryFeatureMatrix,
    grid: &[TrainingConfig],
    k_folds: usize,
    seed: u64,
) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::arg("grid search needs at least one candidate"));
    }
    if k_folds < 2 {
        return Err(Error::arg("grid search needs k_folds >= 2"));
    }
    let fold_scores: Vec<Vec<f64>> = grid
        .iter()
        .map(|cfg| cross_validate(matrix, cfg, k_folds, seed))
        .collect::<Result<_>>()?;
    let mean_scores: Vec<f64> = fold_scores
        .iter()
        .map(|s| s.iter().sum::<f64>() / s.len() as f64)
        .collect();
    let best_index = super::argmax(&mean_scores);
    Ok(GridSearchResult {
        best_index,
        best: grid[best_index].clone(),
        mean_scores,
        fold_scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LogRegConfig;

    fn data() -> BinaryFeatureMatrix {
        let dense: Vec<Vec<bool>> = (0..40).map(|i| vec![i % 2 == 0, i % 2 == 1, i % 3 == 0]).collect();
        let labels = (0..40).map(|i| (i % 2) as u8 + 1).collect();
        BinaryFeatureMatrix::from_dense(&dense, labels).unwrap()
    }

    #[test]
    fn single_point_grid() {
        let cfg = TrainingConfig::LogReg(LogRegConfig::default());
        let r = grid_search_cv(&data(), std::slice::from_ref(&cfg), 5, 1).unwrap();
        assert_eq!(r.best, cfg);
        assert_eq!(r.best_index, 0);
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(grid_search_cv(&data(), &[], 5, 1).is_err());
    }
}

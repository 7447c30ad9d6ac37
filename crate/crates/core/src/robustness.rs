//! Feature ablation: zero out chosen columns, reclassify, and count how the
//! errors move. No scalar robustness score is derived; the report carries
//! raw counts only.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::ClassLabel;
use crate::error::{Error, Result};
use crate::interpret::RankedFeatures;
use crate::models::{balanced_accuracy, Classifier};
use crate::ngram_index::{BinaryFeatureMatrix, FeatureVocabulary, NGram};

/// Copy of `matrix` with `columns` cleared, and the number of 1-entries
/// that were removed.
pub fn ablate(matrix: &BinaryFeatureMatrix, columns: &[u32]) -> Result<(BinaryFeatureMatrix, u64)> {
    if let Some(&bad) = columns.iter().find(|&&c| c as usize >= matrix.n_features()) {
        return Err(Error::arg(format!(
            "column {bad} out of range for {} features",
            matrix.n_features()
        )));
    }
    let drop: BTreeSet<u32> = columns.iter().copied().collect();
    let mut out = matrix.clone();
    let mut changed = 0u64;
    for row in out.rows_mut() {
        let before = row.len();
        row.retain(|c| !drop.contains(c));
        changed += (before - row.len()) as u64;
    }
    Ok((out, changed))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub ablated_features: Vec<NGram>,
    pub ablated_columns: Vec<u32>,
    pub cells_changed: u64,
    pub n_samples: usize,
    pub baseline_errors: u64,
    pub ablated_errors: u64,
    pub per_class_baseline_errors: BTreeMap<ClassLabel, u64>,
    pub per_class_ablated_errors: BTreeMap<ClassLabel, u64>,
    pub per_class_error_delta: BTreeMap<ClassLabel, i64>,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    pub balanced_accuracy_before: f64,
    pub balanced_accuracy_after: f64,
}

impl AblationReport {
    pub fn error_delta(&self) -> i64 {
        self.ablated_errors as i64 - self.baseline_errors as i64
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Ablated features ({}):", self.ablated_features.len());
        for g in &self.ablated_features {
            let _ = writeln!(s, "  {g}");
        }
        let _ = writeln!(s, "Cells changed: {}", self.cells_changed);
        let _ = writeln!(s, "Samples: {}", self.n_samples);
        let _ = writeln!(
            s,
            "Errors: {} -> {} ({:+})",
            self.baseline_errors,
            self.ablated_errors,
            self.error_delta()
        );
        let _ = writeln!(s, "Accuracy: {:.4} -> {:.4}", self.accuracy_before, self.accuracy_after);
        let _ = writeln!(
            s,
            "Balanced accuracy: {:.4} -> {:.4}",
            self.balanced_accuracy_before, self.balanced_accuracy_after
        );
        let _ = writeln!(s, "{:<8}{:>10}{:>10}{:>8}", "Class", "Before", "After", "Delta");
        for (class, delta) in &self.per_class_error_delta {
            let _ = writeln!(
                s,
                "{:<8}{:>10}{:>10}{:>+8}",
                class, self.per_class_baseline_errors[class], self.per_class_ablated_errors[class], delta
            );
        }
        s
    }
}

fn errors_by_class(predictions: &[ClassLabel], labels: &[ClassLabel]) -> BTreeMap<ClassLabel, u64> {
    let mut out: BTreeMap<ClassLabel, u64> = labels.iter().map(|&l| (l, 0)).collect();
    for (p, l) in predictions.iter().zip(labels) {
        if p != l {
            *out.get_mut(l).expect("seeded") += 1;
        }
    }
    out
}

/// Classifies `matrix` before and after clearing `columns`.
pub fn ablation_report(
    model: &dyn Classifier,
    matrix: &BinaryFeatureMatrix,
    vocab: &FeatureVocabulary,
    columns: &[u32],
) -> Result<AblationReport> {
    if vocab.len() != matrix.n_features() {
        return Err(Error::arg("vocabulary does not match the matrix"));
    }
    if matrix.n_samples() == 0 {
        return Err(Error::arg("no samples to classify"));
    }
    let (ablated, cells_changed) = ablate(matrix, columns)?;
    let labels = matrix.labels();
    let before = model.predict_matrix(matrix)?;
    let after = model.predict_matrix(&ablated)?;
    let base = errors_by_class(&before, labels);
    let abl = errors_by_class(&after, labels);
    let per_class_error_delta = base.iter().map(|(c, b)| (*c, abl[c] as i64 - *b as i64)).collect();
    let baseline_errors: u64 = base.values().sum();
    let ablated_errors: u64 = abl.values().sum();
    let n = matrix.n_samples() as f64;
    Ok(AblationReport {
        ablated_features: columns
            .iter()
            .map(|&c| vocab.ngram(c).expect("checked column").clone())
            .collect(),
        ablated_columns: columns.to_vec(),
        cells_changed,
        n_samples: matrix.n_samples(),
        baseline_errors,
        ablated_errors,
        per_class_baseline_errors: base,
        per_class_ablated_errors: abl,
        per_class_error_delta,
        accuracy_before: 1.0 - baseline_errors as f64 / n,
        accuracy_after: 1.0 - ablated_errors as f64 / n,
        balanced_accuracy_before: balanced_accuracy(&before, labels)?,
        balanced_accuracy_after: balanced_accuracy(&after, labels)?,
    })
}

/// Columns of the top `k` entries, or of every entry with value ≥
/// `min_value`. Exactly one selector must be given.
pub fn significant_features(ranked: &RankedFeatures, k: Option<usize>, min_value: Option<f64>) -> Result<Vec<u32>> {
    match (k, min_value) {
        (Some(k), None) => Ok(ranked.entries.iter().take(k).map(|e| e.column).collect()),
        (None, Some(t)) if t.is_nan() => Err(Error::arg("min_value is NaN")),
        (None, Some(t)) => Ok(ranked
            .entries
            .iter()
            .filter(|e| e.value >= t)
            .map(|e| e.column)
            .collect()),
        _ => Err(Error::arg("give exactly one of k and min_value")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interpret::RankingKind;

    fn matrix() -> BinaryFeatureMatrix {
        // 10×5, column 2 has four ones
        let dense: Vec<Vec<bool>> = (0..10)
            .map(|i| {
                (0..5)
                    .map(|j| (j == 2 && i % 3 == 0) || (j != 2 && (i + j) % 2 == 0))
                    .collect()
            })
            .collect();
        BinaryFeatureMatrix::from_dense(&dense, vec![1; 10]).unwrap()
    }

    #[test]
    fn ablation_counts_removed_cells() {
        let m = matrix();
        assert_eq!(m.column(2).iter().filter(|&&b| b).count(), 4);
        let (a, changed) = ablate(&m, &[2]).unwrap();
        assert_eq!(changed, 4);
        assert!(a.column(2).iter().all(|&b| !b));
        assert_eq!(a.nnz(), m.nnz() - 4);
        let (again, changed) = ablate(&a, &[2]).unwrap();
        assert_eq!(changed, 0);
        assert_eq!(again, a);
    }

    #[test]
    fn empty_and_invalid_sets() {
        let m = matrix();
        let (a, changed) = ablate(&m, &[]).unwrap();
        assert_eq!((a, changed), (m.clone(), 0));
        assert!(ablate(&m, &[5]).is_err());
    }

    #[test]
    fn selectors() {
        let v = FeatureVocabulary::from_ngrams(1, (0..4u8).map(|b| NGram::new(vec![b])).collect()).unwrap();
        let r = RankedFeatures::from_values(RankingKind::ClassWeight, None, &[0.1, 0.9, 0.59, 0.6], &v).unwrap();
        assert_eq!(significant_features(&r, Some(0), None).unwrap(), Vec::<u32>::new());
        assert_eq!(significant_features(&r, Some(9), None).unwrap(), vec![1, 3, 2, 0]);
        assert_eq!(significant_features(&r, None, Some(0.59)).unwrap(), vec![1, 3, 2]);
        assert!(significant_features(&r, None, None).is_err());
        assert!(significant_features(&r, Some(1), Some(0.5)).is_err());
    }
}

//! One-vs-rest L2-regularized logistic regression.
//!
//! Each binary sub-model minimizes
//! `½‖β‖² + C·Σᵢ ln(1 + exp(−yᵢ(β·xᵢ + b)))` with `yᵢ ∈ {−1, +1}` and an
//! unregularized intercept, using L-BFGS with a backtracking line search.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sigmoid, softplus, Classifier};
use crate::corpus::ClassLabel;
use crate::error::{Error, Result};
use crate::ngram_index::BinaryFeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegConfig {
    /// Inverse regularization strength.
    pub c: f64,
    /// Stop once an iteration lowers the objective by less than this
    /// fraction.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            c: 10.0,
            tolerance: 1e-4,
            max_iter: 1000,
        }
    }
}

impl LogRegConfig {
    pub(crate) fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.c > 0.0 && self.c.is_finite()) {
            out.push(format!("logreg.c must be positive (got {})", self.c));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            out.push(format!("logreg.tolerance must be positive (got {})", self.tolerance));
        }
        if self.max_iter == 0 {
            out.push("logreg.max_iter must be at least 1".into());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegOvr {
    pub classes: Vec<ClassLabel>,
    pub n_features: usize,
    /// `weights[c][j]`: weight of feature `j` in the sub-model for
    /// `classes[c]`.
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub config: LogRegConfig,
}

impl LogRegOvr {
    /// `β_c·x + b_c` for the sub-model at class index `c`.
    pub fn decision(&self, class_index: usize, row: &[u32]) -> f64 {
        let w = &self.weights[class_index];
        self.intercepts[class_index] + row.iter().map(|&j| w[j as usize]).sum::<f64>()
    }

    /// Predicted odds `p/(1−p)` of class `class_index`, i.e. `exp(decision)`.
    pub fn odds(&self, class_index: usize, row: &[u32]) -> f64 {
        self.decision(class_index, row).exp()
    }
}

impl Classifier for LogRegOvr {
    fn classes(&self) -> &[ClassLabel] {
        &self.classes
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn probabilities_unchecked(&self, row: &[u32]) -> Vec<f64> {
        (0..self.classes.len())
            .map(|c| sigmoid(self.decision(c, row)))
            .collect()
    }
}

/// Objective value and gradient for one binary sub-model.
///
/// `params` holds the `n_features` weights followed by the intercept;
/// `positive[i]` says whether row `i` is in the positive class.
pub fn logistic_objective(rows: &[Vec<u32>], positive: &[bool], c: f64, params: &[f64]) -> (f64, Vec<f64>) {
    let n_features = params.len() - 1;
    let (weights, intercept) = params.split_at(n_features);
    let intercept = intercept[0];
    let mut grad: Vec<f64> = weights.to_vec();
    grad.push(0.0);
    let mut value = 0.5 * weights.iter().map(|w| w * w).sum::<f64>();
    for (row, &pos) in rows.iter().zip(positive) {
        let y = if pos { 1.0 } else { -1.0 };
        let margin = intercept + row.iter().map(|&j| weights[j as usize]).sum::<f64>();
        value += c * softplus(-y * margin);
        // d/dm ln(1 + e^{-ym}) = -y·σ(-ym)
        let g = -c * y * sigmoid(-y * margin);
        for &j in row {
            grad[j as usize] += g;
        }
        grad[n_features] += g;
    }
    (value, grad)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory BFGS with Armijo backtracking. Stops when the relative
/// objective decrease drops below `tolerance`.
fn minimize_lbfgs<F>(objective: F, mut x: Vec<f64>, tolerance: f64, max_iter: usize) -> Vec<f64>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    const MEMORY: usize = 10;
    let (mut f, mut g) = objective(&x);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);

    for iter in 0..max_iter {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm == 0.0 || !gnorm.is_finite() {
            break;
        }
        // Two-loop recursion for the search direction.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = match history.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / gnorm,
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut direction: Vec<f64> = q.into_iter().map(|v| -v).collect();
        let mut slope = dot(&g, &direction);
        if slope >= 0.0 {
            // Curvature information went stale; fall back to steepest descent.
            history.clear();
            direction = g.iter().map(|v| -v / gnorm).collect();
            slope = dot(&g, &direction);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate: Vec<f64> = x.iter().zip(&direction).map(|(xi, di)| xi + step * di).collect();
            let (fc, gc) = objective(&candidate);
            if fc.is_finite() && fc <= f + 1e-4 * step * slope {
                accepted = Some((candidate, fc, gc));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            log::debug!("line search failed at iteration {iter}");
            break;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if history.len() == MEMORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let decrease = (f - f_new) / f.abs().max(f_new.abs()).max(1.0);
        x = x_new;
        f = f_new;
        g = g_new;
        if decrease < tolerance {
            break;
        }
    }
    x
}

/// Fits one binary sub-model per class present in `matrix`.
pub fn train_logreg_ovr(matrix: &BinaryFeatureMatrix, config: &LogRegConfig) -> Result<LogRegOvr> {
    let problems = config.problems();
    if !problems.is_empty() {
        return Err(Error::Config { fields: problems });
    }
    let classes = matrix.classes();
    if classes.len() < 2 {
        return Err(Error::Training(format!(
            "one-vs-rest needs at least two classes, found {}",
            classes.len()
        )));
    }
    let n_features = matrix.n_features();
    let fitted: Vec<Vec<f64>> = classes
        .par_iter()
        .map(|&class| {
            let positive: Vec<bool> = matrix.labels().iter().map(|&l| l == class).collect();
            let objective = |p: &[f64]| logistic_objective(matrix.rows(), &positive, config.c, p);
            minimize_lbfgs(objective, vec![0.0; n_features + 1], config.tolerance, config.max_iter)
        })
        .collect();
    let mut weights = Vec::with_capacity(classes.len());
    let mut intercepts = Vec::with_capacity(classes.len());
    for mut params in fitted {
        intercepts.push(params.pop().expect("intercept"));
        weights.push(params);
    }
    Ok(LogRegOvr {
        classes,
        n_features,
        weights,
        intercepts,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> BinaryFeatureMatrix {
        BinaryFeatureMatrix::from_dense(
            &[
                vec![true, false],
                vec![true, false],
                vec![true, true],
                vec![false, true],
                vec![false, true],
                vec![false, false],
            ],
            vec![1, 1, 1, 2, 2, 2],
        )
        .unwrap()
    }

    #[test]
    fn separable_toy_is_fit_exactly() {
        let m = separable();
        let model = train_logreg_ovr(&m, &LogRegConfig::default()).unwrap();
        assert_eq!(model.predict_matrix(&m).unwrap(), m.labels());
    }

    #[test]
    fn tiny_c_shrinks_weights() {
        let m = separable();
        let cfg = LogRegConfig {
            c: 1e-6,
            tolerance: 1e-10,
            max_iter: 500,
        };
        let model = train_logreg_ovr(&m, &cfg).unwrap();
        let norm: f64 = model.weights.iter().flatten().map(|w| w * w).sum::<f64>().sqrt();
        assert!(norm < 1e-4, "{norm}");
    }

    #[test]
    fn single_class_rejected() {
        let m = BinaryFeatureMatrix::from_dense(&[vec![true], vec![false]], vec![3, 3]).unwrap();
        assert!(matches!(
            train_logreg_ovr(&m, &LogRegConfig::default()),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn zero_row_gives_intercept_probabilities() {
        let m = separable();
        let model = train_logreg_ovr(&m, &LogRegConfig::default()).unwrap();
        let p = model.predict(&[]).unwrap().probabilities;
        for (c, prob) in p.iter().enumerate() {
            assert_eq!(*prob, sigmoid(model.intercepts[c]));
        }
        assert!(model.predict(&[2]).is_err());
    }

    #[test]
    fn objective_at_zero() {
        let rows = vec![vec![0], vec![]];
        let (f, g) = logistic_objective(&rows, &[true, false], 2.0, &[0.0, 0.0]);
        assert!((f - 4.0 * std::f64::consts::LN_2).abs() < 1e-12);
        // Positive row pulls w0 and b down by C/2, negative row pushes b up.
        assert!((g[0] + 1.0).abs() < 1e-12);
        assert!(g[1].abs() < 1e-12);
    }
}

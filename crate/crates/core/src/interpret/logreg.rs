use serde::Serialize;

use super::{RankedFeatures, RankingKind};
use crate::corpus::ClassLabel;
use crate::error::{Error, Result};
use crate::models::{check_row, sigmoid, Classifier, LogRegOvr};
use crate::ngram_index::{FeatureVocabulary, NGram};

/// `(1/K)·Σ_c |β_c,j|` over the K binary sub-models.
pub fn avg_abs_weights(model: &LogRegOvr, vocab: &FeatureVocabulary) -> Result<RankedFeatures> {
    let k = model.weights.len().max(1) as f64;
    let values: Vec<f64> = (0..model.n_features)
        .map(|j| model.weights.iter().map(|w| w[j].abs()).sum::<f64>() / k)
        .collect();
    RankedFeatures::from_values(RankingKind::AvgAbsWeight, None, &values, vocab)
}

/// Signed weights of one class's sub-model.
pub fn class_weights(model: &LogRegOvr, vocab: &FeatureVocabulary, class: ClassLabel) -> Result<RankedFeatures> {
    let c = model.class_index(class)?;
    RankedFeatures::from_values(RankingKind::ClassWeight, Some(class), &model.weights[c], vocab)
}

/// Percent change in predicted odds when a feature with weight `weight`
/// turns on: `(e^β − 1)·100`.
pub fn percent_odds_change(weight: f64) -> f64 {
    weight.exp_m1() * 100.0
}

/// Probability and odds of a sample with no features present.
pub fn reference_odds(intercept: f64) -> (f64, f64) {
    let p = sigmoid(intercept);
    let q = sigmoid(-intercept);
    (p, p / q)
}

/// Applies each weight's odds change in turn, starting from `start`.
pub fn chain_odds(start: f64, weights: impl IntoIterator<Item = f64>) -> f64 {
    weights
        .into_iter()
        .fold(start, |odds, w| odds * (1.0 + percent_odds_change(w) / 100.0))
}

pub fn odds_to_probability(odds: f64) -> f64 {
    odds / (1.0 + odds)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OddsTerm {
    #[serde(skip)]
    pub column: u32,
    pub ngram: NGram,
    pub weight: f64,
    pub percent_odds_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OddsStep {
    pub ngram: NGram,
    pub weight: f64,
    pub percent_odds_change: f64,
    pub odds_before: f64,
    pub odds_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OddsWalkthrough {
    pub steps: Vec<OddsStep>,
    pub final_odds: f64,
    pub final_probability: f64,
    /// The sub-model's own odds for the sample, `exp(β·x + b)`.
    pub model_odds: f64,
    pub model_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OddsExplanation {
    pub class: ClassLabel,
    pub intercept: f64,
    pub reference_probability: f64,
    pub reference_odds: f64,
    /// Every feature, by descending weight.
    pub terms: Vec<OddsTerm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub walkthrough: Option<OddsWalkthrough>,
}

impl OddsExplanation {
    pub fn top(&self, k: usize) -> Self {
        OddsExplanation {
            terms: self.terms.iter().take(k).cloned().collect(),
            ..self.clone()
        }
    }
}

/// Odds-ratio reading of one class's sub-model, with an optional
/// walkthrough for `sample` that chains each present feature's odds change
/// from the zero-vector reference.
pub fn odds_explanation(
    model: &LogRegOvr,
    vocab: &FeatureVocabulary,
    class: ClassLabel,
    sample: Option<&[u32]>,
) -> Result<OddsExplanation> {
    let c = model.class_index(class)?;
    if vocab.len() != model.n_features {
        return Err(Error::arg("vocabulary does not match the model"));
    }
    let intercept = model.intercepts[c];
    let (reference_probability, ref_odds) = reference_odds(intercept);
    let ranked = class_weights(model, vocab, class)?;
    let terms = ranked
        .entries
        .into_iter()
        .map(|e| OddsTerm {
            column: e.column,
            ngram: e.ngram,
            weight: e.value,
            percent_odds_change: percent_odds_change(e.value),
        })
        .collect();
    let walkthrough = match sample {
        None => None,
        Some(row) => {
            check_row(row, model.n_features)?;
            let mut odds = ref_odds;
            let steps = row
                .iter()
                .map(|&j| {
                    let weight = model.weights[c][j as usize];
                    let before = odds;
                    odds = chain_odds(odds, [weight]);
                    OddsStep {
                        ngram: vocab.ngram(j).expect("checked column").clone(),
                        weight,
                        percent_odds_change: percent_odds_change(weight),
                        odds_before: before,
                        odds_after: odds,
                    }
                })
                .collect();
            let decision = model.decision(c, row);
            Some(OddsWalkthrough {
                steps,
                final_odds: odds,
                final_probability: odds_to_probability(odds),
                model_odds: decision.exp(),
                model_probability: sigmoid(decision),
            })
        }
    };
    Ok(OddsExplanation {
        class,
        intercept,
        reference_probability,
        reference_odds: ref_odds,
        terms,
        walkthrough,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LogRegConfig;

    fn model(weights: Vec<Vec<f64>>, intercepts: Vec<f64>) -> LogRegOvr {
        let n_features = weights[0].len();
        LogRegOvr {
            classes: (1..=weights.len() as u8).collect(),
            n_features,
            weights,
            intercepts,
            config: LogRegConfig::default(),
        }
    }

    fn vocab(n: usize) -> FeatureVocabulary {
        FeatureVocabulary::from_ngrams(1, (0..n as u8).map(|b| NGram::new(vec![b])).collect()).unwrap()
    }

    #[test]
    fn averaged_absolute_weights() {
        let m = model(vec![vec![1.0, -3.0], vec![-1.0, 1.0]], vec![0.0, 0.0]);
        let r = avg_abs_weights(&m, &vocab(2)).unwrap();
        assert_eq!(r.entries[0].column, 1);
        assert_eq!(r.entries[0].value, 2.0);
        assert_eq!(r.entries[1].value, 1.0);
    }

    #[test]
    fn zero_weights_rank_as_zero() {
        let m = model(vec![vec![0.0; 3], vec![0.0; 3]], vec![0.0, 0.0]);
        assert!(avg_abs_weights(&m, &vocab(3))
            .unwrap()
            .entries
            .iter()
            .all(|e| e.value == 0.0));
        assert!(class_weights(&m, &vocab(3), 2)
            .unwrap()
            .entries
            .iter()
            .all(|e| e.value == 0.0));
        assert!(class_weights(&m, &vocab(3), 9).is_err());
    }

    #[test]
    fn zero_weight_changes_nothing() {
        assert_eq!(percent_odds_change(0.0), 0.0);
    }

    #[test]
    fn walkthrough_matches_model_odds() {
        let m = model(vec![vec![0.7, -0.2, 1.5], vec![0.1, 0.2, 0.3]], vec![-2.0, 0.5]);
        let e = odds_explanation(&m, &vocab(3), 1, Some(&[0, 2])).unwrap();
        let w = e.walkthrough.unwrap();
        assert_eq!(w.steps.len(), 2);
        assert!((w.final_odds / w.model_odds - 1.0).abs() < 1e-12);
        assert!((w.final_probability - w.model_probability).abs() < 1e-12);
        assert_eq!(e.terms[0].weight, 1.5);
    }
}

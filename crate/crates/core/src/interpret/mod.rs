//! Explanations for the trained models.
//!
//! * logistic regression: averaged absolute weights, per-class weights and
//!   odds-ratio walkthroughs ([`avg_abs_weights`], [`class_weights`],
//!   [`odds_explanation`]);
//! * random forest: Gini importances, the most confident tree for a sample,
//!   and decision-path contributions ([`gini_importances`],
//!   [`best_tree_for_sample`], [`tree_contributions`]);
//! * MLP: ε-rule layer-wise relevance propagation toward an output class, a
//!   hidden layer, or a single hidden node ([`lrp_relevances`],
//!   [`hidden_relevances`], [`input_relevances_for_hidden_node`]).

mod forest;
mod logreg;
mod lrp;
mod report;

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::Serialize;

use crate::corpus::ClassLabel;
use crate::error::{Error, Result};
use crate::ngram_index::{FeatureVocabulary, NGram};

pub use forest::{
    best_tree_for_sample, gini_importances, tree_contributions, ContributionBreakdown, FeatureContribution,
};
pub use logreg::{
    avg_abs_weights, chain_odds, class_weights, odds_explanation, odds_to_probability, percent_odds_change,
    reference_odds, OddsExplanation, OddsStep, OddsTerm, OddsWalkthrough,
};
pub use lrp::{
    avg_abs_relevances, class_avg_relevances, epsilon_lrp, hidden_relevances, hidden_relevances_dense,
    input_relevances_for_hidden_node, input_relevances_for_hidden_node_dense, lrp_relevances, lrp_relevances_dense,
    Activation, DenseLayer, RelevancePolicy, RelevanceTarget, RelevanceVector, LRP_EPSILON,
};

/// Report length used when none is given.
pub const DEFAULT_TOP_K: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingKind {
    AvgAbsWeight,
    ClassWeight,
    GiniImportance,
    AvgAbsRelevance,
    ClassAvgRelevance,
    /// Relevances of one sample toward one output.
    SampleRelevance,
    /// Input relevances toward a single hidden node.
    HiddenNodeRelevance,
}

impl RankingKind {
    pub fn name(self) -> &'static str {
        match self {
            RankingKind::AvgAbsWeight => "avg_abs_weight",
            RankingKind::ClassWeight => "class_weight",
            RankingKind::GiniImportance => "gini_importance",
            RankingKind::AvgAbsRelevance => "avg_abs_relevance",
            RankingKind::ClassAvgRelevance => "class_avg_relevance",
            RankingKind::SampleRelevance => "sample_relevance",
            RankingKind::HiddenNodeRelevance => "hidden_node_relevance",
        }
    }

    pub fn value_label(self) -> &'static str {
        match self {
            RankingKind::AvgAbsWeight => "Avg. Abs. Weight",
            RankingKind::ClassWeight => "Weight",
            RankingKind::GiniImportance => "Feature Importance",
            RankingKind::AvgAbsRelevance => "Avg. Abs. Relevance",
            RankingKind::ClassAvgRelevance => "Avg. Relevance",
            RankingKind::SampleRelevance | RankingKind::HiddenNodeRelevance => "Relevance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedEntry {
    #[serde(skip)]
    pub column: u32,
    pub ngram: NGram,
    pub value: f64,
}

/// Features sorted by descending value; ties go to the smaller n-gram so
/// the order does not depend on column numbering.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedFeatures {
    pub kind: RankingKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class: Option<ClassLabel>,
    pub entries: Vec<RankedEntry>,
}

impl RankedFeatures {
    pub fn from_values(
        kind: RankingKind,
        class: Option<ClassLabel>,
        values: &[f64],
        vocab: &FeatureVocabulary,
    ) -> Result<Self> {
        if values.len() != vocab.len() {
            return Err(Error::arg(format!(
                "{} values for a vocabulary of {}",
                values.len(),
                vocab.len()
            )));
        }
        let mut entries: Vec<RankedEntry> = values
            .iter()
            .zip(vocab.ngrams())
            .enumerate()
            .map(|(j, (&value, ngram))| RankedEntry {
                column: j as u32,
                ngram: ngram.clone(),
                value,
            })
            .collect();
        entries.sort_by(|a, b| {
            b.value
                .partial_cmp(&a.value)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.ngram.cmp(&b.ngram))
        });
        Ok(RankedFeatures { kind, class, entries })
    }

    /// The first `k` entries.
    pub fn top(&self, k: usize) -> Self {
        RankedFeatures {
            kind: self.kind,
            class: self.class,
            entries: self.entries.iter().take(k).cloned().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn columns(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.column).collect()
    }

    pub fn value_of(&self, ngram: &NGram) -> Option<f64> {
        self.entries.iter().find(|e| &e.ngram == ngram).map(|e| e.value)
    }
}

/// Number of n-grams shared by the top `k` of two rankings.
pub fn top_k_overlap(a: &RankedFeatures, b: &RankedFeatures, k: usize) -> usize {
    let left: BTreeSet<&NGram> = a.entries.iter().take(k).map(|e| &e.ngram).collect();
    b.entries.iter().take(k).filter(|e| left.contains(&e.ngram)).count()
}

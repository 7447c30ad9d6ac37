use std::fmt::Write as _;

use super::{ContributionBreakdown, OddsExplanation, RankedFeatures, RelevanceTarget, RelevanceVector};

fn gram_header(width: usize, n: usize) -> String {
    format!("{:<width$}", format!("{n}-gram"))
}

impl RankedFeatures {
    /// Aligned table: rank, n-gram, value.
    pub fn to_text(&self) -> String {
        let n = self.entries.first().map_or(0, |e| e.ngram.len());
        let width = (2 * n).max(8) + 2;
        let mut s = String::new();
        match self.class {
            Some(c) => {
                let _ = writeln!(s, "{} (class {c})", self.kind.name());
            }
            None => {
                let _ = writeln!(s, "{}", self.kind.name());
            }
        }
        let _ = writeln!(s, "{:<6}{}{}", "Rank", gram_header(width, n), self.kind.value_label());
        for (i, e) in self.entries.iter().enumerate() {
            let _ = writeln!(s, "{:<6}{:<width$}{:.4}", i + 1, e.ngram.to_hex(), e.value);
        }
        s
    }
}

impl OddsExplanation {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "class {}", self.class);
        let _ = writeln!(s, "intercept             {:.5}", self.intercept);
        let _ = writeln!(s, "reference probability {:.5}", self.reference_probability);
        let _ = writeln!(s, "reference odds        {:.5}", self.reference_odds);
        let n = self.terms.first().map_or(0, |t| t.ngram.len());
        let width = (2 * n).max(8) + 2;
        let _ = writeln!(
            s,
            "{:<6}{}{:>10}{:>16}",
            "Rank",
            gram_header(width, n),
            "Weight",
            "Odds change %"
        );
        for (i, t) in self.terms.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:<6}{:<width$}{:>10.4}{:>16.2}",
                i + 1,
                t.ngram.to_hex(),
                t.weight,
                t.percent_odds_change
            );
        }
        if let Some(w) = &self.walkthrough {
            let _ = writeln!(s, "walkthrough");
            for step in &w.steps {
                let _ = writeln!(
                    s,
                    "  {}  {:+.4}  odds {:.5} -> {:.5}",
                    step.ngram, step.weight, step.odds_before, step.odds_after
                );
            }
            let _ = writeln!(
                s,
                "  final odds {:.5}, probability {:.4}",
                w.final_odds, w.final_probability
            );
            let _ = writeln!(
                s,
                "  model odds {:.5}, probability {:.4}",
                w.model_odds, w.model_probability
            );
        }
        s
    }
}

impl ContributionBreakdown {
    /// Table for the class at index `k`.
    pub fn to_text(&self, k: usize) -> String {
        let mut s = String::new();
        let (bias_share, shares) = self.shares(k);
        let _ = writeln!(s, "tree {} class {}", self.tree, self.classes[k]);
        let _ = writeln!(s, "{:<16}{:>9}{:>12}{:>9}", "Feature", "Present", "Delta", "Share");
        let _ = writeln!(
            s,
            "{:<16}{:>9}{:>12.4}{:>8.1}%",
            "bias",
            "",
            self.bias[k],
            bias_share * 100.0
        );
        for (c, share) in self.contributions.iter().zip(&shares) {
            let _ = writeln!(
                s,
                "{:<16}{:>9}{:>12.4}{:>8.1}%",
                c.ngram.to_hex(),
                if c.present { "yes" } else { "no" },
                c.delta[k],
                share * 100.0
            );
        }
        let _ = writeln!(s, "prediction {:.4}", self.prediction[k]);
        s
    }
}

impl RelevanceVector {
    /// Per-node table for hidden-layer relevances; `activations` are the
    /// hidden outputs shown next to each node.
    pub fn hidden_table(&self, activations: &[f64]) -> String {
        let mut s = String::new();
        match self.target {
            RelevanceTarget::Class(c) => {
                let _ = writeln!(s, "hidden relevances toward class {c}");
            }
            RelevanceTarget::HiddenNode(n) => {
                let _ = writeln!(s, "relevances toward hidden node {n}");
            }
        }
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]).then(a.cmp(&b)));
        let _ = writeln!(s, "{:<6}{:>12}{:>14}", "Node", "Relevance", "Activation");
        for j in order {
            let act = activations.get(j).copied().unwrap_or(f64::NAN);
            let _ = writeln!(s, "{:<6}{:>12.4}{:>14.8}", j + 1, self.values[j], act);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use crate::interpret::{RankedFeatures, RankingKind};
    use crate::ngram_index::FeatureVocabulary;

    #[test]
    fn ranked_table_shape() {
        let v = FeatureVocabulary::from_ngrams(6, vec!["00008B5DE43B".parse().unwrap()]).unwrap();
        let r = RankedFeatures::from_values(RankingKind::ClassWeight, Some(3), &[4.3916], &v).unwrap();
        let t = r.to_text();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "class_weight (class 3)");
        assert!(lines[1].starts_with("Rank  6-gram"));
        assert!(lines[2].starts_with("1     00008B5DE43B  4.3916"));
    }
}

//! Chi² and mutual-information scoring of binary features against class
//! labels, averaged over stratified batches, and threshold selection.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::ClassLabel;
use crate::error::{Error, Result};
use crate::ngram_index::{header_value, parse_header, BinaryFeatureMatrix, FeatureVocabulary, NGram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    #[value(name = "chi2")]
    #[serde(rename = "chi2")]
    Chi2,
    #[value(name = "mi")]
    #[serde(rename = "mi")]
    MutualInformation,
}

impl Scorer {
    pub fn name(self) -> &'static str {
        match self {
            Scorer::Chi2 => "chi2",
            Scorer::MutualInformation => "mi",
        }
    }

    /// Scores a feature from its per-class presence counts and the class
    /// sizes (same order, classes with zero samples allowed).
    pub fn score_counts(self, present: &[u64], class_sizes: &[u64]) -> f64 {
        match self {
            Scorer::Chi2 => chi2_from_counts(present, class_sizes),
            Scorer::MutualInformation => mi_from_counts(present, class_sizes),
        }
    }
}

impl std::str::FromStr for Scorer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chi2" => Ok(Scorer::Chi2),
            "mi" => Ok(Scorer::MutualInformation),
            other => Err(Error::arg(format!("unknown scorer `{other}`"))),
        }
    }
}

/// Pearson chi-square of the 2×K presence/class table. Cells with zero
/// expected count contribute nothing.
pub fn chi2_from_counts(present: &[u64], class_sizes: &[u64]) -> f64 {
    let n: u64 = class_sizes.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let row_present: f64 = present.iter().sum::<u64>() as f64;
    let row_absent = n - row_present;
    let mut stat = 0.0;
    for (&p, &size) in present.iter().zip(class_sizes) {
        let size = size as f64;
        let p = p as f64;
        for (observed, row) in [(p, row_present), (size - p, row_absent)] {
            let expected = row * size / n;
            if expected > 0.0 {
                let d = observed - expected;
                stat += d * d / expected;
            }
        }
    }
    stat
}

/// Plug-in mutual information, in nats, between presence and class.
pub fn mi_from_counts(present: &[u64], class_sizes: &[u64]) -> f64 {
    let n: u64 = class_sizes.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let p_present = present.iter().sum::<u64>() as f64 / n;
    let mut mi = 0.0;
    for (&p, &size) in present.iter().zip(class_sizes) {
        let p_class = size as f64 / n;
        for (joint_count, p_x) in [(p as f64, p_present), ((size - p) as f64, 1.0 - p_present)] {
            if joint_count > 0.0 {
                let joint = joint_count / n;
                mi += joint * (joint / (p_x * p_class)).ln();
            }
        }
    }
    // Rounding can leave a tiny negative value for independent features.
    mi.max(0.0)
}

fn column_counts(column: &[bool], labels: &[ClassLabel]) -> Result<(Vec<u64>, Vec<u64>)> {
    if column.len() != labels.len() {
        return Err(Error::arg(format!(
            "column has {} entries but there are {} labels",
            column.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::arg("cannot score an empty column"));
    }
    let mut counts: BTreeMap<ClassLabel, (u64, u64)> = BTreeMap::new();
    for (&x, &y) in column.iter().zip(labels) {
        let e = counts.entry(y).or_default();
        e.0 += x as u64;
        e.1 += 1;
    }
    Ok(counts.into_values().unzip())
}

pub fn chi2_score(column: &[bool], labels: &[ClassLabel]) -> Result<f64> {
    let (present, sizes) = column_counts(column, labels)?;
    Ok(chi2_from_counts(&present, &sizes))
}

pub fn mi_score(column: &[bool], labels: &[ClassLabel]) -> Result<f64> {
    let (present, sizes) = column_counts(column, labels)?;
    Ok(mi_from_counts(&present, &sizes))
}

/// Per-feature scores, keyed by n-gram.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub scorer: Scorer,
    pub batch_count: usize,
    pub n: usize,
    pub scores: BTreeMap<NGram, f64>,
}

impl ScoreTable {
    /// `HEXGRAM<TAB>score` lines (17 significant digits) after a header.
    pub fn to_tsv(&self) -> String {
        let mut out = format!(
            "#scores scorer={} batches={} n={}\n",
            self.scorer.name(),
            self.batch_count,
            self.n
        );
        for (gram, score) in &self.scores {
            let _ = writeln!(out, "{gram}\t{score:.16e}");
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines
            .next()
            .map(|(_, l)| l)
            .ok_or_else(|| Error::parse(1, "empty score file"))?;
        let fields = parse_header(header, "#scores", 1)?;
        let scorer: String = header_value(&fields, "scorer", 1)?;
        let scorer = scorer.parse().map_err(|e: Error| Error::parse(1, e.to_string()))?;
        let batch_count = header_value(&fields, "batches", 1)?;
        let n = header_value(&fields, "n", 1)?;
        let mut scores = BTreeMap::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let (gram, score) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(idx + 1, "expected HEXGRAM<TAB>score"))?;
            let gram: NGram = gram.parse().map_err(|e: Error| Error::parse(idx + 1, e.to_string()))?;
            let score: f64 = score
                .parse()
                .map_err(|_| Error::parse(idx + 1, format!("bad score `{score}`")))?;
            scores.insert(gram, score);
        }
        Ok(ScoreTable {
            scorer,
            batch_count,
            n,
            scores,
        })
    }
}

/// Scores every matrix column within each batch and averages per feature.
///
/// `candidates` names the matrix columns. Batches are sample-index sets,
/// normally from [`crate::corpus::stratified_partition_indices`].
pub fn batched_scores(
    matrix: &BinaryFeatureMatrix,
    candidates: &FeatureVocabulary,
    scorer: Scorer,
    batches: &[Vec<usize>],
) -> Result<ScoreTable> {
    if candidates.len() != matrix.n_features() {
        return Err(Error::arg("candidate vocabulary does not match matrix columns"));
    }
    if batches.is_empty() {
        return Err(Error::arg("at least one batch is required"));
    }
    if let Some(i) = batches.iter().position(Vec::is_empty) {
        return Err(Error::arg(format!("batch {i} is empty")));
    }
    if let Some(&bad) = batches.iter().flatten().find(|&&i| i >= matrix.n_samples()) {
        return Err(Error::arg(format!("sample index {bad} out of range")));
    }
    let classes = matrix.classes();
    let class_pos = |c: ClassLabel| classes.binary_search(&c).expect("label from matrix");
    let n_features = matrix.n_features();

    let per_batch: Vec<Vec<f64>> = batches
        .par_iter()
        .map(|batch| {
            let k = classes.len();
            let mut sizes = vec![0u64; k];
            // present[feature * k + class]
            let mut present = vec![0u64; n_features * k];
            for &i in batch {
                let c = class_pos(matrix.labels()[i]);
                sizes[c] += 1;
                for &j in matrix.row(i) {
                    present[j as usize * k + c] += 1;
                }
            }
            (0..n_features)
                .map(|j| scorer.score_counts(&present[j * k..(j + 1) * k], &sizes))
                .collect()
        })
        .collect();

    let b = batches.len() as f64;
    let scores = candidates
        .ngrams()
        .iter()
        .enumerate()
        .map(|(j, g)| (g.clone(), per_batch.iter().map(|s| s[j]).sum::<f64>() / b))
        .collect();
    Ok(ScoreTable {
        scorer,
        batch_count: batches.len(),
        n: candidates.n(),
        scores,
    })
}

/// Maps sample-id batches to matrix row indices.
pub fn batches_from_ids(matrix: &BinaryFeatureMatrix, batches: &[Vec<String>]) -> Result<Vec<Vec<usize>>> {
    let lookup: std::collections::HashMap<&str, usize> = matrix
        .sample_ids()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    batches
        .iter()
        .map(|b| {
            b.iter()
                .map(|id| {
                    lookup
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| Error::NotFound(format!("sample `{id}` is not in the matrix")))
                })
                .collect()
        })
        .collect()
}

/// Features scoring strictly above `threshold`, best first.
pub fn select_by_threshold(scores: &ScoreTable, threshold: f64) -> Result<FeatureVocabulary> {
    if !threshold.is_finite() {
        return Err(Error::arg("threshold must be finite"));
    }
    let kept: Vec<(NGram, f64)> = scores
        .scores
        .iter()
        .filter(|(_, &s)| s > threshold)
        .map(|(g, &s)| (g.clone(), s))
        .collect();
    if kept.is_empty() {
        log::warn!(
            "no {} score exceeds {threshold}; selected vocabulary is empty",
            scores.scorer.name()
        );
    }
    FeatureVocabulary::from_scored(scores.n, kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independent_feature_scores_zero() {
        let column = [true, false, true, false, true, false];
        let labels = [1, 1, 2, 2, 3, 3];
        assert!(chi2_score(&column, &labels).unwrap().abs() < 1e-12);
        assert!(mi_score(&column, &labels).unwrap().abs() < 1e-12);
    }

    #[test]
    fn perfect_association() {
        let labels: Vec<ClassLabel> = (0..100).map(|i| if i < 50 { 1 } else { 2 }).collect();
        let column: Vec<bool> = labels.iter().map(|&c| c == 1).collect();
        assert_eq!(chi2_score(&column, &labels).unwrap(), 100.0);
        assert!((mi_score(&column, &labels).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(chi2_score(&[true], &[1, 2]).is_err());
        assert!(mi_score(&[], &[]).is_err());
    }

    #[test]
    fn constant_feature_contributes_nothing() {
        // Every expected count in the absent row is zero.
        assert_eq!(chi2_score(&[true, true, true], &[1, 2, 2]).unwrap(), 0.0);
        assert_eq!(mi_score(&[true, true, true], &[1, 2, 2]).unwrap(), 0.0);
    }

    fn table(entries: &[(&str, f64)]) -> ScoreTable {
        ScoreTable {
            scorer: Scorer::Chi2,
            batch_count: 1,
            n: 1,
            scores: entries.iter().map(|(g, s)| (g.parse().unwrap(), *s)).collect(),
        }
    }

    #[test]
    fn threshold_is_strict() {
        let t = table(&[("0A", 2.0), ("0B", 1.0)]);
        let v = select_by_threshold(&t, 1.0).unwrap();
        assert_eq!(v.ngrams().len(), 1);
        assert_eq!(v.ngrams()[0].to_hex(), "0A");
        assert_eq!(select_by_threshold(&t, -1.0).unwrap().len(), 2);
        assert!(select_by_threshold(&t, 5.0).unwrap().is_empty());
        assert!(select_by_threshold(&t, f64::NAN).is_err());
    }

    #[test]
    fn score_tsv_roundtrip_is_exact() {
        let t = table(&[("0A", 1.0 / 3.0), ("0B", 330.000000000001), ("0C", 0.0)]);
        assert_eq!(ScoreTable::from_tsv(&t.to_tsv()).unwrap(), t);
    }

    #[test]
    fn single_batch_equals_direct_scores() {
        let m = BinaryFeatureMatrix::from_dense(
            &[
                vec![true, false],
                vec![true, true],
                vec![false, true],
                vec![false, false],
            ],
            vec![1, 1, 2, 2],
        )
        .unwrap();
        let vocab = FeatureVocabulary::from_ngrams(1, vec!["01".parse().unwrap(), "02".parse().unwrap()]).unwrap();
        let t = batched_scores(&m, &vocab, Scorer::Chi2, &[vec![0, 1, 2, 3]]).unwrap();
        let direct = chi2_score(&m.column(0), m.labels()).unwrap();
        assert_eq!(t.scores[&"01".parse::<NGram>().unwrap()], direct);
        assert!(batched_scores(&m, &vocab, Scorer::Chi2, &[vec![0, 1], vec![]]).is_err());
    }
}

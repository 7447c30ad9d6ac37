//! Independent oracles and fixtures shared by the integration tests. Kept
//! deliberately naive: no library code on the computing side.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};

use gramsight::corpus::{ByteRun, ByteStream, ClassLabel};
use gramsight::feature_select::Scorer;
use gramsight::models::{train, Model, ModelKind};
use gramsight::ngram_index::{BinaryFeatureMatrix, FeatureVocabulary, NGram};
use gramsight::pipeline::{extract_features, select_features, PipelineConfig};
use gramsight::synth::{generate, SynthConfig, SynthCorpus};
use rand::Rng;

/// Pearson χ² from an explicit contingency table, observed against
/// row·column/N expectations.
pub fn chi2_oracle(column: &[bool], labels: &[ClassLabel]) -> f64 {
    let n = column.len() as f64;
    let mut table: BTreeMap<(bool, ClassLabel), f64> = BTreeMap::new();
    let mut rows: HashMap<bool, f64> = HashMap::new();
    let mut cols: BTreeMap<ClassLabel, f64> = BTreeMap::new();
    for (&x, &y) in column.iter().zip(labels) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let mut stat = 0.0;
    for x in [false, true] {
        for (&y, &cy) in &cols {
            let expected = rows.get(&x).copied().unwrap_or(0.0) * cy / n;
            if expected == 0.0 {
                continue;
            }
            let observed = table.get(&(x, y)).copied().unwrap_or(0.0);
            stat += (observed - expected).powi(2) / expected;
        }
    }
    stat
}

/// Mutual information in nats from the empirical joint distribution.
pub fn mi_oracle(column: &[bool], labels: &[ClassLabel]) -> f64 {
    let n = column.len() as f64;
    let mut joint: HashMap<(bool, ClassLabel), f64> = HashMap::new();
    let mut px: HashMap<bool, f64> = HashMap::new();
    let mut py: HashMap<ClassLabel, f64> = HashMap::new();
    for (&x, &y) in column.iter().zip(labels) {
        *joint.entry((x, y)).or_default() += 1.0 / n;
        *px.entry(x).or_default() += 1.0 / n;
        *py.entry(y).or_default() += 1.0 / n;
    }
    joint.iter().map(|(&(x, y), &p)| p * (p / (px[&x] * py[&y])).ln()).sum()
}

/// Document frequency by brute force: every window of every run, deduped
/// per document with a hash set of owned byte vectors.
pub fn naive_df(docs: &[ByteStream], n: usize) -> BTreeMap<Vec<u8>, u64> {
    let mut out = BTreeMap::new();
    for d in docs {
        let mut seen = HashSet::new();
        for run in &d.runs {
            if run.bytes.len() >= n {
                for w in run.bytes.windows(n) {
                    seen.insert(w.to_vec());
                }
            }
        }
        for g in seen {
            *out.entry(g).or_insert(0) += 1;
        }
    }
    out
}

/// Random stream of up to `max_len` bytes in one to three runs, drawn from
/// a small alphabet so n-grams repeat across documents.
pub fn random_doc(rng: &mut impl Rng, id: usize, max_len: usize, alphabet: u8) -> ByteStream {
    let len = rng.gen_range(0..=max_len);
    let runs = rng.gen_range(1..=3usize);
    let mut start = rng.gen_range(0..1000u32);
    let mut out = Vec::new();
    let per = len / runs;
    for _ in 0..runs {
        let bytes: Vec<u8> = (0..per).map(|_| rng.gen_range(0..alphabet)).collect();
        let l = bytes.len() as u32;
        out.push(ByteRun { start, bytes });
        // gap of at least one byte
        start += l + rng.gen_range(1..50);
    }
    ByteStream::from_runs(format!("doc{id}"), out).expect("ordered runs")
}

/// Central difference of `f` along coordinate `i`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    plus[i] += h;
    minus[i] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// Relative gap used by the gradient checks, with unit floor so that
/// near-zero components compare absolutely.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// The synthetic corpus with the desk-scale configuration, vectorized
/// once per scorer.
pub struct Desk {
    pub corpus: SynthCorpus,
    pub cfg: PipelineConfig,
    pub candidates: FeatureVocabulary,
    pub matrix: BinaryFeatureMatrix,
}

impl Desk {
    pub fn new() -> Self {
        let corpus = generate(&SynthConfig::default()).expect("synth");
        let streams: Vec<ByteStream> = corpus.samples.iter().map(|s| s.stream.clone()).collect();
        let labels: Vec<ClassLabel> = corpus.samples.iter().map(|s| s.label).collect();
        let cfg = PipelineConfig::scaled_to(streams.len());
        let (candidates, matrix) = extract_features(&streams, &labels, &cfg).expect("extract");
        Desk {
            corpus,
            cfg,
            candidates,
            matrix,
        }
    }

    pub fn features(&self, scorer: Scorer) -> (FeatureVocabulary, BinaryFeatureMatrix) {
        let sel = select_features(&self.candidates, &self.matrix, scorer, &self.cfg).expect("select");
        (sel.vocab, sel.matrix)
    }

    /// Model of `kind` trained on its default feature set.
    pub fn model(&self, kind: ModelKind) -> (Model, FeatureVocabulary, BinaryFeatureMatrix) {
        let (vocab, matrix) = self.features(self.cfg.scorer_for(kind));
        let model = train(&matrix, &self.cfg.training_config(kind)).expect("train");
        (model, vocab, matrix)
    }

    pub fn is_planted(&self, g: &NGram) -> bool {
        self.corpus.planted.iter().any(|p| &p.ngram == g)
    }
}

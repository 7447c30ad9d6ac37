use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use super::count::{header_value, parse_header};
use super::gram::{for_each_packed, for_each_window, pack, NGram, PACKED_MAX};
use super::matrix::BinaryFeatureMatrix;
use crate::corpus::{ByteStream, ClassLabel};
use crate::error::{Error, Result};

/// Ordered feature set; column `j` is `ngrams[j]`. Immutable once built.
#[derive(Debug, Clone)]
pub struct FeatureVocabulary {
    n: usize,
    ngrams: Vec<NGram>,
    index: HashMap<NGram, u32>,
    packed: FxHashMap<u64, u32>,
}

impl PartialEq for FeatureVocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.ngrams == other.ngrams
    }
}

impl FeatureVocabulary {
    /// Uses the given order as column order.
    pub fn from_ngrams(n: usize, ngrams: Vec<NGram>) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("n-gram length must be at least 1"));
        }
        let mut index = HashMap::with_capacity(ngrams.len());
        for (col, g) in ngrams.iter().enumerate() {
            if g.len() != n {
                return Err(Error::arg(format!("{g} has length {} but n={n}", g.len())));
            }
            if index.insert(g.clone(), col as u32).is_some() {
                return Err(Error::arg(format!("{g} appears twice in the vocabulary")));
            }
        }
        let packed = if n <= PACKED_MAX {
            ngrams
                .iter()
                .enumerate()
                .map(|(col, g)| (pack(g.as_bytes()), col as u32))
                .collect()
        } else {
            FxHashMap::default()
        };
        Ok(FeatureVocabulary {
            n,
            ngrams,
            index,
            packed,
        })
    }

    /// Orders by descending score, ties by hex.
    pub fn from_scored(n: usize, mut scored: Vec<(NGram, f64)>) -> Result<Self> {
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        Self::from_ngrams(n, scored.into_iter().map(|(g, _)| g).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.ngrams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ngrams.is_empty()
    }

    pub fn ngrams(&self) -> &[NGram] {
        &self.ngrams
    }

    pub fn ngram(&self, column: u32) -> Option<&NGram> {
        self.ngrams.get(column as usize)
    }

    pub fn column(&self, gram: &[u8]) -> Option<u32> {
        self.index.get(gram).copied()
    }

    /// `HEXGRAM<TAB>column` lines in column order, after one header line.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("#vocab n={} size={}\n", self.n, self.len());
        for (col, g) in self.ngrams.iter().enumerate() {
            let _ = writeln!(out, "{g}\t{col}");
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines
            .next()
            .map(|(_, l)| l)
            .ok_or_else(|| Error::parse(1, "empty vocabulary file"))?;
        let fields = parse_header(header, "#vocab", 1)?;
        let n: usize = header_value(&fields, "n", 1)?;
        let size: usize = header_value(&fields, "size", 1)?;
        let mut ngrams = Vec::with_capacity(size);
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let (gram, col) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(idx + 1, "expected HEXGRAM<TAB>column"))?;
            let col: usize = col
                .parse()
                .map_err(|_| Error::parse(idx + 1, format!("bad column `{col}`")))?;
            if col != ngrams.len() {
                return Err(Error::parse(idx + 1, format!("column {col} out of sequence")));
            }
            ngrams.push(gram.parse().map_err(|e: Error| Error::parse(idx + 1, e.to_string()))?);
        }
        if ngrams.len() != size {
            return Err(Error::parse(
                1,
                format!("header says {size} entries, found {}", ngrams.len()),
            ));
        }
        Self::from_ngrams(n, ngrams)
    }
}

/// Sorted column ids of the vocabulary n-grams present in `stream`.
pub fn vectorize(stream: &ByteStream, vocab: &FeatureVocabulary) -> Vec<u32> {
    let mut row = Vec::new();
    if vocab.is_empty() {
        return row;
    }
    if vocab.n <= PACKED_MAX {
        for_each_packed(stream, vocab.n, |k| {
            if let Some(&c) = vocab.packed.get(&k) {
                row.push(c);
            }
        });
    } else {
        for_each_window(stream, vocab.n, |w| {
            if let Some(c) = vocab.column(w) {
                row.push(c);
            }
        });
    }
    row.sort_unstable();
    row.dedup();
    row
}

/// Vectorizes every stream, in parallel, into a labeled matrix.
pub fn vectorize_all(
    streams: &[ByteStream],
    labels: &[ClassLabel],
    vocab: &FeatureVocabulary,
) -> Result<BinaryFeatureMatrix> {
    if streams.len() != labels.len() {
        return Err(Error::arg("one label per stream required"));
    }
    let rows: Vec<Vec<u32>> = streams.par_iter().map(|s| vectorize(s, vocab)).collect();
    BinaryFeatureMatrix::new(
        vocab.len(),
        streams.iter().map(|s| s.sample_id.clone()).collect(),
        labels.to_vec(),
        rows,
    )
}

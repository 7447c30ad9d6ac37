use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::count::{header_value, parse_header};
use crate::corpus::ClassLabel;
use crate::error::{Error, Result};

/// Samples × features presence matrix; each row is the sorted list of
/// columns that are 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryFeatureMatrix {
    n_features: usize,
    sample_ids: Vec<String>,
    labels: Vec<ClassLabel>,
    rows: Vec<Vec<u32>>,
}

impl BinaryFeatureMatrix {
    pub fn new(
        n_features: usize,
        sample_ids: Vec<String>,
        labels: Vec<ClassLabel>,
        mut rows: Vec<Vec<u32>>,
    ) -> Result<Self> {
        if sample_ids.len() != rows.len() || labels.len() != rows.len() {
            return Err(Error::arg(format!(
                "{} rows, {} ids, {} labels",
                rows.len(),
                sample_ids.len(),
                labels.len()
            )));
        }
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            if let Some(&last) = row.last() {
                if last as usize >= n_features {
                    return Err(Error::arg(format!(
                        "column {last} out of range for {n_features} features"
                    )));
                }
            }
        }
        Ok(BinaryFeatureMatrix {
            n_features,
            sample_ids,
            labels,
            rows,
        })
    }

    /// Builds from dense 0/1 rows; sample ids are `s0`, `s1`, ...
    pub fn from_dense(dense: &[Vec<bool>], labels: Vec<ClassLabel>) -> Result<Self> {
        let n_features = dense.first().map_or(0, Vec::len);
        if dense.iter().any(|r| r.len() != n_features) {
            return Err(Error::arg("ragged dense matrix"));
        }
        let rows = dense
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v)
                    .map(|(j, _)| j as u32)
                    .collect()
            })
            .collect();
        let ids = (0..dense.len()).map(|i| format!("s{i}")).collect();
        Self::new(n_features, ids, labels, rows)
    }

    pub fn n_samples(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.rows[i]
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn get(&self, i: usize, j: u32) -> bool {
        self.rows[i].binary_search(&j).is_ok()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn column(&self, j: u32) -> Vec<bool> {
        (0..self.n_samples()).map(|i| self.get(i, j)).collect()
    }

    pub fn index_of(&self, sample_id: &str) -> Option<usize> {
        self.sample_ids.iter().position(|s| s == sample_id)
    }

    /// Distinct labels, ascending.
    pub fn classes(&self) -> Vec<ClassLabel> {
        self.labels
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        BinaryFeatureMatrix {
            n_features: self.n_features,
            sample_ids: indices.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Keeps the given columns (in the given order) and renumbers them.
    pub fn select_columns(&self, columns: &[u32]) -> Result<Self> {
        let mut remap = vec![u32::MAX; self.n_features];
        for (new, &old) in columns.iter().enumerate() {
            let slot = remap
                .get_mut(old as usize)
                .ok_or_else(|| Error::arg(format!("column {old} out of range")))?;
            *slot = new as u32;
        }
        let rows = self
            .rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|&c| remap[c as usize])
                    .filter(|&c| c != u32::MAX)
                    .collect()
            })
            .collect();
        Self::new(columns.len(), self.sample_ids.clone(), self.labels.clone(), rows)
    }

    pub(crate) fn rows_mut(&mut self) -> &mut [Vec<u32>] {
        &mut self.rows
    }

    /// One line per sample: `id<TAB>label<TAB>col col ...`.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "#matrix n_features={} n_samples={}\n",
            self.n_features,
            self.n_samples()
        );
        for ((id, label), row) in self.sample_ids.iter().zip(&self.labels).zip(&self.rows) {
            let _ = write!(out, "{id}\t{label}\t");
            for (k, c) in row.iter().enumerate() {
                if k > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{c}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines
            .next()
            .map(|(_, l)| l)
            .ok_or_else(|| Error::parse(1, "empty matrix file"))?;
        let fields = parse_header(header, "#matrix", 1)?;
        let n_features: usize = header_value(&fields, "n_features", 1)?;
        let n_samples: usize = header_value(&fields, "n_samples", 1)?;
        let (mut ids, mut labels, mut rows) = (Vec::new(), Vec::new(), Vec::new());
        for (idx, line) in lines {
            let mut parts = line.splitn(3, '\t');
            let (Some(id), Some(label), Some(cols)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::parse(idx + 1, "expected id<TAB>label<TAB>columns"));
            };
            ids.push(id.to_string());
            labels.push(
                label
                    .parse()
                    .map_err(|_| Error::parse(idx + 1, format!("bad label `{label}`")))?,
            );
            rows.push(
                cols.split_whitespace()
                    .map(|c| c.parse::<u32>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::parse(idx + 1, "bad column id"))?,
            );
        }
        if rows.len() != n_samples {
            return Err(Error::parse(
                1,
                format!("header says {n_samples} samples, found {}", rows.len()),
            ));
        }
        Self::new(n_features, ids, labels, rows)
    }
}

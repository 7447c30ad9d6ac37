//! ε-rule relevance propagation.
//!
//! A network is a stack of bias-free dense layers. Relevance starts as the
//! target output's pre-activation and flows backwards through
//! `R_i = Σ_k a_i·w_ik / (z_k + ε·sign z_k) · R_k`, where `a` are a layer's
//! inputs and `z` its pre-activations. Activations are passed through
//! unchanged, so relevance is attached to post-activation values.

use std::borrow::Cow;

use rayon::prelude::*;
use serde::Serialize;

use super::{RankedFeatures, RankingKind};
use crate::corpus::ClassLabel;
use crate::error::{Error, Result};
use crate::models::{argmax, check_row, Classifier, Mlp};
use crate::ngram_index::{BinaryFeatureMatrix, FeatureVocabulary};

pub const LRP_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => crate::models::sigmoid(z),
        }
    }
}

/// `out_k = act(Σ_i in_i · weights[i * outputs + k])`
#[derive(Debug, Clone)]
pub struct DenseLayer<'a> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Cow<'a, [f64]>,
    pub activation: Activation,
}

impl<'a> DenseLayer<'a> {
    pub fn new(
        inputs: usize,
        outputs: usize,
        weights: impl Into<Cow<'a, [f64]>>,
        activation: Activation,
    ) -> Result<Self> {
        let weights = weights.into();
        if weights.len() != inputs * outputs {
            return Err(Error::arg(format!(
                "{} weights for a {inputs}x{outputs} layer",
                weights.len()
            )));
        }
        Ok(DenseLayer {
            inputs,
            outputs,
            weights,
            activation,
        })
    }

    fn pre_activation(&self, a: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.outputs];
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            let w = &self.weights[i * self.outputs..(i + 1) * self.outputs];
            for (zk, wk) in z.iter_mut().zip(w) {
                *zk += ai * wk;
            }
        }
        z
    }
}

fn stabilize(z: f64, epsilon: f64) -> f64 {
    if z >= 0.0 {
        z + epsilon
    } else {
        z - epsilon
    }
}

/// Relevance of every input of `layers[0]` toward output `target` of the
/// last layer, and the relevance assigned to that output.
pub fn epsilon_lrp(layers: &[DenseLayer], x: &[f64], target: usize, epsilon: f64) -> Result<(Vec<f64>, f64)> {
    let last = layers.last().ok_or_else(|| Error::arg("empty network"))?;
    if target >= last.outputs {
        return Err(Error::arg(format!(
            "output {target} out of range ({} outputs)",
            last.outputs
        )));
    }
    if x.len() != layers[0].inputs {
        return Err(Error::arg(format!(
            "{} inputs for a network taking {}",
            x.len(),
            layers[0].inputs
        )));
    }
    for pair in layers.windows(2) {
        if pair[0].outputs != pair[1].inputs {
            return Err(Error::arg("layer sizes do not chain"));
        }
    }

    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
    let mut pre: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
    let mut a = x.to_vec();
    for layer in layers {
        let z = layer.pre_activation(&a);
        let next = z.iter().map(|&v| layer.activation.apply(v)).collect();
        inputs.push(std::mem::replace(&mut a, next));
        pre.push(z);
    }

    let target_relevance = pre.last().expect("nonempty")[target];
    let mut r = vec![0.0; last.outputs];
    r[target] = target_relevance;
    for (l, layer) in layers.iter().enumerate().rev() {
        let s: Vec<f64> = r
            .iter()
            .zip(&pre[l])
            .map(|(rk, &zk)| rk / stabilize(zk, epsilon))
            .collect();
        r = inputs[l]
            .iter()
            .enumerate()
            .map(|(i, &ai)| {
                if ai == 0.0 {
                    return 0.0;
                }
                let w = &layer.weights[i * layer.outputs..(i + 1) * layer.outputs];
                ai * w.iter().zip(&s).map(|(wk, sk)| wk * sk).sum::<f64>()
            })
            .collect();
    }
    Ok((r, target_relevance))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RelevanceTarget {
    /// Output unit for this class.
    Class(ClassLabel),
    /// Hidden node, numbered from 1.
    HiddenNode(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelevanceVector {
    pub target: RelevanceTarget,
    /// Relevance assigned to the target before propagation.
    pub target_relevance: f64,
    pub values: Vec<f64>,
}

impl RelevanceVector {
    /// `|Σ values − target| / max(1, |target|)`
    pub fn conservation_error(&self) -> f64 {
        let sum: f64 = self.values.iter().sum();
        (sum - self.target_relevance).abs() / self.target_relevance.abs().max(1.0)
    }

    /// Ranks input relevances against `vocab`.
    pub fn ranked(&self, vocab: &FeatureVocabulary) -> Result<RankedFeatures> {
        let (kind, class) = match self.target {
            RelevanceTarget::Class(c) => (RankingKind::SampleRelevance, Some(c)),
            RelevanceTarget::HiddenNode(_) => (RankingKind::HiddenNodeRelevance, None),
        };
        RankedFeatures::from_values(kind, class, &self.values, vocab)
    }
}

fn input_layer(model: &Mlp) -> DenseLayer<'_> {
    DenseLayer {
        inputs: model.n_features,
        outputs: model.hidden,
        weights: Cow::Borrowed(&model.w1),
        activation: Activation::Tanh,
    }
}

fn output_layer(model: &Mlp) -> DenseLayer<'_> {
    DenseLayer {
        inputs: model.hidden,
        outputs: model.outputs(),
        weights: Cow::Borrowed(&model.w2),
        activation: Activation::Sigmoid,
    }
}

fn dense_row(row: &[u32], n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for &j in row {
        x[j as usize] = 1.0;
    }
    x
}

/// Input relevances of a dense input toward output unit `output`.
pub fn lrp_relevances_dense(model: &Mlp, x: &[f64], output: usize) -> Result<RelevanceVector> {
    let (values, target_relevance) = epsilon_lrp(&[input_layer(model), output_layer(model)], x, output, LRP_EPSILON)?;
    Ok(RelevanceVector {
        target: RelevanceTarget::Class(model.classes[output]),
        target_relevance,
        values,
    })
}

/// Input relevances of one sample toward `class`.
pub fn lrp_relevances(model: &Mlp, row: &[u32], class: ClassLabel) -> Result<RelevanceVector> {
    check_row(row, model.n_features)?;
    let k = model.class_index(class)?;
    lrp_relevances_dense(model, &dense_row(row, model.n_features), k)
}

/// Relevance of each hidden node toward output unit `output`. The hidden
/// layer alone is treated as the network, fed the pre-activation values
/// `x·W1`.
pub fn hidden_relevances_dense(model: &Mlp, x: &[f64], output: usize) -> Result<RelevanceVector> {
    if x.len() != model.n_features {
        return Err(Error::arg(format!(
            "{} inputs for a network taking {}",
            x.len(),
            model.n_features
        )));
    }
    let h = input_layer(model).pre_activation(x);
    let (values, target_relevance) = epsilon_lrp(&[output_layer(model)], &h, output, LRP_EPSILON)?;
    Ok(RelevanceVector {
        target: RelevanceTarget::Class(model.classes[output]),
        target_relevance,
        values,
    })
}

/// Hidden-node relevances of one sample toward `class`, or toward the
/// predicted class when `class` is `None`.
pub fn hidden_relevances(model: &Mlp, row: &[u32], class: Option<ClassLabel>) -> Result<RelevanceVector> {
    check_row(row, model.n_features)?;
    let k = match class {
        Some(c) => model.class_index(c)?,
        None => argmax(&model.probabilities_unchecked(row)),
    };
    hidden_relevances_dense(model, &dense_row(row, model.n_features), k)
}

/// Input relevances toward hidden node `node` (numbered from 1), using the
/// single-output network made of that node's incoming weights.
pub fn input_relevances_for_hidden_node_dense(model: &Mlp, x: &[f64], node: usize) -> Result<RelevanceVector> {
    if node == 0 || node > model.hidden {
        return Err(Error::arg(format!(
            "hidden node {node} out of range 1..={}",
            model.hidden
        )));
    }
    let column: Vec<f64> = (0..model.n_features).map(|i| model.w1_at(i, node - 1)).collect();
    let layer = DenseLayer::new(model.n_features, 1, column, Activation::Tanh)?;
    let (values, target_relevance) = epsilon_lrp(&[layer], x, 0, LRP_EPSILON)?;
    Ok(RelevanceVector {
        target: RelevanceTarget::HiddenNode(node),
        target_relevance,
        values,
    })
}

pub fn input_relevances_for_hidden_node(model: &Mlp, row: &[u32], node: usize) -> Result<RelevanceVector> {
    check_row(row, model.n_features)?;
    input_relevances_for_hidden_node_dense(model, &dense_row(row, model.n_features), node)
}

/// Which output each sample's relevance is computed toward when averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RelevancePolicy {
    #[default]
    PredictedClass,
    TrueClass,
}

/// `(1/N)·Σ_s |R_s,j|` over all samples.
pub fn avg_abs_relevances(
    model: &Mlp,
    matrix: &BinaryFeatureMatrix,
    vocab: &FeatureVocabulary,
    policy: RelevancePolicy,
) -> Result<RankedFeatures> {
    check_shapes(model, matrix, vocab)?;
    let rows: Vec<usize> = (0..matrix.n_samples()).collect();
    let totals = chunked_sum(model.n_features, &rows, |i| {
        let row = matrix.row(i);
        let k = match policy {
            RelevancePolicy::PredictedClass => argmax(&model.probabilities_unchecked(row)),
            RelevancePolicy::TrueClass => model.class_index(matrix.labels()[i])?,
        };
        let r = lrp_relevances_dense(model, &dense_row(row, model.n_features), k)?;
        Ok(r.values.into_iter().map(f64::abs).collect())
    })?;
    let n = matrix.n_samples().max(1) as f64;
    let values: Vec<f64> = totals.iter().map(|t| t / n).collect();
    RankedFeatures::from_values(RankingKind::AvgAbsRelevance, None, &values, vocab)
}

/// Signed relevance toward `class`, averaged over the samples labeled
/// `class` that the model also predicts as `class`. `None` when there are
/// no such samples.
pub fn class_avg_relevances(
    model: &Mlp,
    matrix: &BinaryFeatureMatrix,
    vocab: &FeatureVocabulary,
    class: ClassLabel,
) -> Result<Option<RankedFeatures>> {
    check_shapes(model, matrix, vocab)?;
    let k = model.class_index(class)?;
    let members: Vec<usize> = (0..matrix.n_samples())
        .into_par_iter()
        .filter(|&i| matrix.labels()[i] == class && argmax(&model.probabilities_unchecked(matrix.row(i))) == k)
        .collect();
    if members.is_empty() {
        return Ok(None);
    }
    let totals = chunked_sum(model.n_features, &members, |i| {
        Ok(lrp_relevances_dense(model, &dense_row(matrix.row(i), model.n_features), k)?.values)
    })?;
    let values: Vec<f64> = totals.iter().map(|t| t / members.len() as f64).collect();
    RankedFeatures::from_values(RankingKind::ClassAvgRelevance, Some(class), &values, vocab).map(Some)
}

/// Sums `f(i)` over `items`. Work is split into fixed-size chunks summed in
/// order, so the result does not depend on thread scheduling.
fn chunked_sum<F>(len: usize, items: &[usize], f: F) -> Result<Vec<f64>>
where
    F: Fn(usize) -> Result<Vec<f64>> + Sync,
{
    const CHUNK: usize = 64;
    let partials: Vec<Vec<f64>> = items
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; len];
            for &i in chunk {
                acc.iter_mut().zip(f(i)?).for_each(|(a, v)| *a += v);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![0.0; len];
    for p in partials {
        total.iter_mut().zip(p).for_each(|(t, v)| *t += v);
    }
    Ok(total)
}

fn check_shapes(model: &Mlp, matrix: &BinaryFeatureMatrix, vocab: &FeatureVocabulary) -> Result<()> {
    if matrix.n_features() != model.n_features || vocab.len() != model.n_features {
        return Err(Error::arg(format!(
            "model has {} features, matrix {}, vocabulary {}",
            model.n_features,
            matrix.n_features(),
            vocab.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::MlpConfig;

    // Two inputs, two hidden nodes, one output.
    fn toy() -> Mlp {
        Mlp {
            classes: vec![1],
            n_features: 2,
            hidden: 2,
            w1: vec![1.0, -1.0, 2.0, 1.0],
            w2: vec![1.0, 2.0],
            config: MlpConfig::default(),
        }
    }

    #[test]
    fn hand_traced_network() {
        let m = toy();
        let x = [1.0, 0.5];
        // h = (2, -0.5), a = tanh h, z = a0 + 2 a1
        let a0 = 2f64.tanh();
        let a1 = (-0.5f64).tanh();
        let z = a0 + 2.0 * a1;
        let scale = z / (z + LRP_EPSILON);
        let rh0 = a0 * scale;
        let rh1 = 2.0 * a1 * scale;
        let rx0 = 1.0 / (2.0 + LRP_EPSILON) * rh0 + -1.0 / (-0.5 - LRP_EPSILON) * rh1;
        let rx1 = 1.0 / (2.0 + LRP_EPSILON) * rh0 + 0.5 / (-0.5 - LRP_EPSILON) * rh1;
        let r = lrp_relevances_dense(&m, &x, 0).unwrap();
        assert!((r.target_relevance - z).abs() < 1e-15);
        assert!((r.values[0] - rx0).abs() < 1e-12, "{} vs {rx0}", r.values[0]);
        assert!((r.values[1] - rx1).abs() < 1e-12, "{} vs {rx1}", r.values[1]);
        // rough magnitudes, independent of the formulas above
        assert!((r.values[0] + 1.366455).abs() < 1e-5);
        assert!((r.values[1] - 1.406248).abs() < 1e-5);
        assert!(r.conservation_error() < 1e-6);
    }

    #[test]
    fn hidden_and_node_subnetworks() {
        let m = toy();
        let x = [1.0, 0.5];
        let h = hidden_relevances_dense(&m, &x, 0).unwrap();
        // fed pre-activations (2, -0.5): relevances ≈ (2, -1)
        assert!((h.values[0] - 2.0).abs() < 1e-8);
        assert!((h.values[1] + 1.0).abs() < 1e-8);
        let n = input_relevances_for_hidden_node_dense(&m, &x, 2).unwrap();
        assert_eq!(n.target, RelevanceTarget::HiddenNode(2));
        assert!((n.target_relevance + 0.5).abs() < 1e-15);
        assert!((n.values[0] + 1.0).abs() < 1e-8);
        assert!((n.values[1] - 0.5).abs() < 1e-8);
        assert!(input_relevances_for_hidden_node_dense(&m, &x, 0).is_err());
        assert!(input_relevances_for_hidden_node_dense(&m, &x, 3).is_err());
    }

    #[test]
    fn zero_input_gets_no_relevance() {
        let m = toy();
        let r = lrp_relevances_dense(&m, &[0.0, 0.0], 0).unwrap();
        assert_eq!(r.values, vec![0.0, 0.0]);
        assert_eq!(r.target_relevance, 0.0);
    }

    #[test]
    fn shape_errors() {
        let m = toy();
        assert!(lrp_relevances_dense(&m, &[1.0], 0).is_err());
        assert!(lrp_relevances_dense(&m, &[1.0, 1.0], 1).is_err());
        assert!(lrp_relevances(&m, &[5], 1).is_err());
        assert!(DenseLayer::new(2, 2, vec![0.0; 3], Activation::Identity).is_err());
    }
}

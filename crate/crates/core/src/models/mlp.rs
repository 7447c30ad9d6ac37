//! Bias-free two-layer perceptron: tanh hidden layer, one sigmoid output
//! per class, trained on summed per-output binary cross-entropy with
//! mini-batch Adam.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, softplus, Classifier};
use crate::corpus::ClassLabel;
use crate::error::{Error, Result};
use crate::ngram_index::BinaryFeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: 40,
            epochs: 200,
            learning_rate: 0.01,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub(crate) fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.hidden == 0 {
            out.push("mlp.hidden must be at least 1".into());
        }
        if self.epochs == 0 {
            out.push("mlp.epochs must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            out.push(format!(
                "mlp.learning_rate must be positive (got {})",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            out.push("mlp.batch_size must be at least 1".into());
        }
        out
    }
}

/// Weights are row-major: `w1[i * hidden + j]` connects input `i` to hidden
/// node `j`; `w2[j * outputs + k]` connects hidden `j` to output `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub classes: Vec<ClassLabel>,
    pub n_features: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub config: MlpConfig,
}

/// Every intermediate value of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub pre_hidden: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub outputs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
}

impl Mlp {
    pub fn zeros(n_features: usize, hidden: usize, classes: Vec<ClassLabel>) -> Self {
        let outputs = classes.len();
        Mlp {
            classes,
            n_features,
            hidden,
            w1: vec![0.0; n_features * hidden],
            w2: vec![0.0; hidden * outputs],
            config: MlpConfig {
                hidden,
                ..MlpConfig::default()
            },
        }
    }

    /// Glorot-uniform initialization.
    pub fn random(n_features: usize, hidden: usize, classes: Vec<ClassLabel>, rng: &mut impl Rng) -> Self {
        let mut m = Self::zeros(n_features, hidden, classes);
        let r1 = (6.0 / (n_features + hidden) as f64).sqrt();
        let r2 = (6.0 / (hidden + m.outputs()) as f64).sqrt();
        m.w1.iter_mut().for_each(|w| *w = rng.gen_range(-r1..r1));
        m.w2.iter_mut().for_each(|w| *w = rng.gen_range(-r2..r2));
        m
    }

    pub fn outputs(&self) -> usize {
        self.classes.len()
    }

    pub fn w1_at(&self, input: usize, hidden: usize) -> f64 {
        self.w1[input * self.hidden + hidden]
    }

    pub fn w2_at(&self, hidden: usize, output: usize) -> f64 {
        self.w2[hidden * self.outputs() + output]
    }

    fn finish_forward(&self, pre_hidden: Vec<f64>) -> Forward {
        let k = self.outputs();
        let hidden: Vec<f64> = pre_hidden.iter().map(|h| h.tanh()).collect();
        let mut logits = vec![0.0; k];
        for (j, a) in hidden.iter().enumerate() {
            let w = &self.w2[j * k..(j + 1) * k];
            logits.iter_mut().zip(w).for_each(|(z, w)| *z += a * w);
        }
        let outputs = logits.iter().map(|&z| sigmoid(z)).collect();
        Forward {
            pre_hidden,
            hidden,
            logits,
            outputs,
        }
    }

    /// Forward pass for a sparse binary row (columns assumed valid).
    pub fn forward_sparse(&self, row: &[u32]) -> Forward {
        let h = self.hidden;
        let mut pre = vec![0.0; h];
        for &i in row {
            let w = &self.w1[i as usize * h..(i as usize + 1) * h];
            pre.iter_mut().zip(w).for_each(|(p, w)| *p += w);
        }
        self.finish_forward(pre)
    }

    /// Forward pass for a real-valued input vector.
    pub fn forward_dense(&self, x: &[f64]) -> Forward {
        let h = self.hidden;
        let mut pre = vec![0.0; h];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let w = &self.w1[i * h..(i + 1) * h];
                pre.iter_mut().zip(w).for_each(|(p, w)| *p += xi * w);
            }
        }
        self.finish_forward(pre)
    }

    /// Summed binary cross-entropy over all samples and outputs, with its
    /// gradient.
    pub fn loss_and_gradient(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> (f64, MlpGradient) {
        let mut grad = MlpGradient {
            w1: vec![0.0; self.w1.len()],
            w2: vec![0.0; self.w2.len()],
        };
        let mut loss = 0.0;
        for (x, t) in inputs.iter().zip(targets) {
            let fwd = self.forward_dense(x);
            loss += self.accumulate(&fwd, t, &mut grad, |g_hidden, grad_w1| {
                for (i, &xi) in x.iter().enumerate() {
                    if xi != 0.0 {
                        let row = &mut grad_w1[i * self.hidden..(i + 1) * self.hidden];
                        row.iter_mut().zip(g_hidden).for_each(|(g, d)| *g += xi * d);
                    }
                }
            });
        }
        (loss, grad)
    }

    /// Adds one sample's gradient; `input_grad` scatters the hidden-layer
    /// delta into `w1`. Returns the sample loss.
    fn accumulate(
        &self,
        fwd: &Forward,
        target: &[f64],
        grad: &mut MlpGradient,
        input_grad: impl FnOnce(&[f64], &mut [f64]),
    ) -> f64 {
        let k = self.outputs();
        let mut loss = 0.0;
        // dL/dz = σ(z) − t for L = softplus(z) − t·z.
        let delta_out: Vec<f64> = fwd
            .logits
            .iter()
            .zip(&fwd.outputs)
            .zip(target)
            .map(|((&z, &o), &t)| {
                loss += softplus(z) - t * z;
                o - t
            })
            .collect();
        let mut delta_hidden = vec![0.0; self.hidden];
        for (j, a) in fwd.hidden.iter().enumerate() {
            let w = &self.w2[j * k..(j + 1) * k];
            let g = &mut grad.w2[j * k..(j + 1) * k];
            let mut back = 0.0;
            for ((gw, &wk), &d) in g.iter_mut().zip(w).zip(&delta_out) {
                *gw += a * d;
                back += wk * d;
            }
            delta_hidden[j] = back * (1.0 - a * a);
        }
        input_grad(&delta_hidden, &mut grad.w1);
        loss
    }

    fn sparse_batch_gradient(
        &self,
        matrix: &BinaryFeatureMatrix,
        batch: &[usize],
        targets: &[usize],
        grad: &mut MlpGradient,
    ) -> f64 {
        grad.w1.iter_mut().for_each(|g| *g = 0.0);
        grad.w2.iter_mut().for_each(|g| *g = 0.0);
        let mut target = vec![0.0; self.outputs()];
        let mut loss = 0.0;
        for &i in batch {
            let row = matrix.row(i);
            target.iter_mut().for_each(|t| *t = 0.0);
            target[targets[i]] = 1.0;
            let fwd = self.forward_sparse(row);
            loss += self.accumulate(&fwd, &target, grad, |g_hidden, grad_w1| {
                for &c in row {
                    let r = &mut grad_w1[c as usize * self.hidden..(c as usize + 1) * self.hidden];
                    r.iter_mut().zip(g_hidden).for_each(|(g, d)| *g += d);
                }
            });
        }
        loss
    }
}

impl Classifier for Mlp {
    fn classes(&self) -> &[ClassLabel] {
        &self.classes
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn probabilities_unchecked(&self, row: &[u32]) -> Vec<f64> {
        self.forward_sparse(row).outputs
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: impl Iterator<Item = f64>, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Trains on every row of `matrix` with one-hot targets.
pub fn train_mlp(matrix: &BinaryFeatureMatrix, config: &MlpConfig) -> Result<Mlp> {
    let problems = config.problems();
    if !problems.is_empty() {
        return Err(Error::Config { fields: problems });
    }
    if matrix.n_samples() == 0 {
        return Err(Error::Training("no training samples".into()));
    }
    let classes = matrix.classes();
    let targets: Vec<usize> = matrix
        .labels()
        .iter()
        .map(|l| classes.binary_search(l).expect("label from matrix"))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Mlp::random(matrix.n_features(), config.hidden, classes, &mut rng);
    model.config = config.clone();

    let mut grad = MlpGradient {
        w1: vec![0.0; model.w1.len()],
        w2: vec![0.0; model.w2.len()],
    };
    let mut adam1 = Adam::new(model.w1.len());
    let mut adam2 = Adam::new(model.w2.len());
    let mut order: Vec<usize> = (0..matrix.n_samples()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            epoch_loss += model.sparse_batch_gradient(matrix, batch, &targets, &mut grad);
            let scale = 1.0 / batch.len() as f64;
            adam1.step(&mut model.w1, grad.w1.iter().map(|g| g * scale), config.learning_rate);
            adam2.step(&mut model.w2, grad.w2.iter().map(|g| g * scale), config.learning_rate);
        }
        if !epoch_loss.is_finite() || model.w1.iter().chain(&model.w2).any(|w| !w.is_finite()) {
            return Err(Error::Training(format!(
                "loss diverged in epoch {epoch}; try a smaller learning rate than {}",
                config.learning_rate
            )));
        }
        log::trace!("epoch {epoch}: loss {epoch_loss:.6}");
    }
    Ok(model)
}

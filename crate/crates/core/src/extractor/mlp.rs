//! Built-in extractor: one hidden rectifier layer followed by a softmax head.
//! The hidden activations are the extracted features.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ExtractorError;
use crate::matrix::FeatureMatrix;

/// Learning rate for `epoch` (0-based) under linear decay to zero.
pub fn learning_rate_at(lr_initial: f64, epoch: usize, epochs: usize) -> f64 {
    lr_initial * (1.0 - epoch as f64 / epochs as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    input_dim: usize,
    hidden: usize,
    classes: usize,
    input_mean: Vec<f64>,
    input_scale: Vec<f64>,
    /// `[w1 (input x hidden), b1 (hidden), w2 (hidden x classes), b2 (classes)]`
    params: Vec<f64>,
}

/// Hyper-parameters of one training run.
#[derive(Debug, Clone, Copy)]
pub struct MlpTraining {
    pub hidden: usize,
    pub epochs: usize,
    pub lr_initial: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl MlpModel {
    fn param_count(d: usize, h: usize, k: usize) -> usize {
        d * h + h + h * k + k
    }

    /// Builds a model from explicit parameters with identity input scaling.
    pub fn from_parts(
        input_dim: usize,
        hidden: usize,
        classes: usize,
        params: Vec<f64>,
    ) -> Result<Self, ExtractorError> {
        if params.len() != Self::param_count(input_dim, hidden, classes) {
            return Err(ExtractorError::Shape(format!(
                "expected {} parameters, got {}",
                Self::param_count(input_dim, hidden, classes),
                params.len()
            )));
        }
        Ok(Self {
            input_dim,
            hidden,
            classes,
            input_mean: vec![0.0; input_dim],
            input_scale: vec![1.0; input_dim],
            params,
        })
    }

    fn init(raw: &FeatureMatrix, classes: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let d = raw.cols();
        let n = raw.rows() as f64;
        let mut mean = vec![0.0; d];
        for r in raw.iter_rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in raw.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        // Single scale shared by all features, so distances keep their shape.
        let sd = (var.iter().sum::<f64>() / (n * d.max(1) as f64)).sqrt();
        let scale = vec![if sd > 1e-12 { 1.0 / sd } else { 1.0 }; d];

        let mut params = vec![0.0; Self::param_count(d, hidden, classes)];
        let he = Normal::new(0.0, (2.0 / d.max(1) as f64).sqrt()).unwrap();
        let glorot = Normal::new(0.0, (1.0 / hidden.max(1) as f64).sqrt()).unwrap();
        let mut model = Self {
            input_dim: d,
            hidden,
            classes,
            input_mean: mean,
            input_scale: scale,
            params: Vec::new(),
        };
        let (w1, _, w2, _) = model.offsets();
        for v in &mut params[w1.clone()] {
            *v = he.sample(rng);
        }
        for v in &mut params[w2.clone()] {
            *v = glorot.sample(rng);
        }
        model.params = params;
        model
    }

    fn offsets(
        &self,
    ) -> (
        std::ops::Range<usize>,
        std::ops::Range<usize>,
        std::ops::Range<usize>,
        std::ops::Range<usize>,
    ) {
        let (d, h, k) = (self.input_dim, self.hidden, self.classes);
        let w1 = 0..d * h;
        let b1 = w1.end..w1.end + h;
        let w2 = b1.end..b1.end + h * k;
        let b2 = w2.end..w2.end + k;
        (w1, b1, w2, b2)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn standardize(&self, row: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = (row[j] - self.input_mean[j]) * self.input_scale[j];
        }
    }

    /// Pre-activation and rectified hidden layer for one standardized input.
    fn hidden_layer(&self, x: &[f64], pre: &mut [f64], act: &mut [f64]) {
        let (w1, b1, _, _) = self.offsets();
        let w1 = &self.params[w1];
        let b1 = &self.params[b1];
        pre.copy_from_slice(b1);
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            let wrow = &w1[j * self.hidden..(j + 1) * self.hidden];
            for (p, w) in pre.iter_mut().zip(wrow) {
                *p += xj * w;
            }
        }
        for (a, &p) in act.iter_mut().zip(pre.iter()) {
            *a = p.max(0.0);
        }
    }

    fn softmax_head(&self, act: &[f64], probs: &mut [f64]) {
        let (_, _, w2, b2) = self.offsets();
        let w2 = &self.params[w2];
        probs.copy_from_slice(&self.params[b2]);
        for (u, &a) in act.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let wrow = &w2[u * self.classes..(u + 1) * self.classes];
            for (p, w) in probs.iter_mut().zip(wrow) {
                *p += a * w;
            }
        }
        let max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for p in probs.iter_mut() {
            *p = (*p - max).exp();
            sum += *p;
        }
        for p in probs.iter_mut() {
            *p /= sum;
        }
    }

    fn check_dim(&self, raw: &FeatureMatrix) -> Result<(), ExtractorError> {
        if raw.cols() != self.input_dim {
            return Err(ExtractorError::Dimension {
                expected: self.input_dim,
                found: raw.cols(),
            });
        }
        Ok(())
    }

    /// Hidden activations, `n x hidden`.
    pub fn extract(&self, raw: &FeatureMatrix) -> Result<FeatureMatrix, ExtractorError> {
        self.check_dim(raw)?;
        let mut out = FeatureMatrix::zeros(raw.rows(), self.hidden);
        let mut x = vec![0.0; self.input_dim];
        let mut pre = vec![0.0; self.hidden];
        for i in 0..raw.rows() {
            self.standardize(raw.row(i), &mut x);
            self.hidden_layer(&x, &mut pre, out.row_mut(i));
        }
        Ok(out)
    }

    /// Class probabilities, `n x classes`.
    pub fn probabilities(&self, raw: &FeatureMatrix) -> Result<FeatureMatrix, ExtractorError> {
        self.check_dim(raw)?;
        let mut out = FeatureMatrix::zeros(raw.rows(), self.classes);
        let mut x = vec![0.0; self.input_dim];
        let mut pre = vec![0.0; self.hidden];
        let mut act = vec![0.0; self.hidden];
        for i in 0..raw.rows() {
            self.standardize(raw.row(i), &mut x);
            self.hidden_layer(&x, &mut pre, &mut act);
            self.softmax_head(&act, out.row_mut(i));
        }
        Ok(out)
    }

    /// Mean cross-entropy over `batch` and its gradient with respect to
    /// every parameter (same layout as `params`).
    pub(crate) fn loss_and_gradient(
        &self,
        raw: &FeatureMatrix,
        labels: &[usize],
        batch: &[usize],
        grad: &mut [f64],
    ) -> f64 {
        let (w1r, b1r, w2r, b2r) = self.offsets();
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (d, h, k) = (self.input_dim, self.hidden, self.classes);
        let w2 = &self.params[w2r.clone()];
        let mut x = vec![0.0; d];
        let mut pre = vec![0.0; h];
        let mut act = vec![0.0; h];
        let mut probs = vec![0.0; k];
        let mut dhidden = vec![0.0; h];
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for &i in batch {
            self.standardize(raw.row(i), &mut x);
            self.hidden_layer(&x, &mut pre, &mut act);
            self.softmax_head(&act, &mut probs);
            let y = labels[i];
            loss -= probs[y].max(f64::MIN_POSITIVE).ln();
            // dL/dlogits = p - onehot
            probs[y] -= 1.0;
            for p in probs.iter_mut() {
                *p *= scale;
            }
            let (gw1, rest) = grad.split_at_mut(b1r.start);
            let (gb1, rest) = rest.split_at_mut(w2r.start - b1r.start);
            let (gw2, gb2) = rest.split_at_mut(b2r.start - w2r.start);
            debug_assert_eq!(gw1.len(), w1r.len());
            for (g, p) in gb2.iter_mut().zip(&probs) {
                *g += p;
            }
            for u in 0..h {
                let wrow = &w2[u * k..(u + 1) * k];
                let mut back = 0.0;
                for c in 0..k {
                    back += probs[c] * wrow[c];
                }
                dhidden[u] = if pre[u] > 0.0 { back } else { 0.0 };
                if act[u] != 0.0 {
                    let grow = &mut gw2[u * k..(u + 1) * k];
                    for c in 0..k {
                        grow[c] += act[u] * probs[c];
                    }
                }
            }
            for (g, dh) in gb1.iter_mut().zip(&dhidden) {
                *g += dh;
            }
            for j in 0..d {
                let xj = x[j];
                if xj == 0.0 {
                    continue;
                }
                let grow = &mut gw1[j * h..(j + 1) * h];
                for (g, dh) in grow.iter_mut().zip(&dhidden) {
                    *g += xj * dh;
                }
            }
        }
        loss * scale
    }
}

/// SGD with momentum, linear learning-rate decay and seeded mini-batch
/// shuffling. Starts from `warm` when given, otherwise from a fresh seeded
/// initialization.
pub fn train(
    raw: &FeatureMatrix,
    labels: &[usize],
    classes: usize,
    cfg: &MlpTraining,
    warm: Option<&MlpModel>,
) -> Result<MlpModel, ExtractorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = match warm {
        Some(m) if m.input_dim == raw.cols() && m.classes == classes && m.hidden == cfg.hidden => {
            m.clone()
        }
        _ => MlpModel::init(raw, classes, cfg.hidden, &mut rng),
    };
    let mut velocity = vec![0.0; model.params.len()];
    let mut grad = vec![0.0; model.params.len()];
    let mut order: Vec<usize> = (0..raw.rows()).collect();
    for epoch in 0..cfg.epochs {
        let lr = learning_rate_at(cfg.lr_initial, epoch, cfg.epochs);
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let loss = model.loss_and_gradient(raw, labels, batch, &mut grad);
            if !loss.is_finite() {
                return Err(ExtractorError::Divergence { epoch: epoch + 1 });
            }
            for ((p, v), g) in model.params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.momentum * *v - lr * g;
                *p += *v;
            }
        }
        if !model.params.iter().all(|p| p.is_finite()) {
            return Err(ExtractorError::Divergence { epoch: epoch + 1 });
        }
    }
    Ok(model)
}

//! Exact t-SNE.
//!
//! Pairwise affinities are computed on the full `n x n` grid; there is no
//! tree or grid approximation. All accumulation is done in `f64`.
//!
//! The pipeline is:
//! [`pairwise_sq_distances`] -> [`calibrate_perplexity`] -> [`symmetrize`] ->
//! gradient descent on [`kl_divergence`] using [`kl_gradient`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::matrix::FeatureMatrix;
use crate::par;

/// Lower bound applied to joint affinities so `ln(P)` stays finite.
pub const AFFINITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TsneError {
    #[error("t-SNE needs at least 4 samples, got {0}")]
    TooFewSamples(usize),
    #[error("invalid t-SNE parameters: {0}")]
    InvalidParams(String),
    #[error("row {row} is degenerate: all distances to other samples are zero")]
    DegenerateRow { row: usize },
    #[error("optimization diverged at iteration {iteration}")]
    Divergence { iteration: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneParams {
    /// Target perplexity; [`tsne_embed`] clamps it to `(n - 1) / 3`.
    pub perplexity: f64,
    pub iterations: usize,
    pub early_exaggeration_factor: f64,
    /// Number of leading iterations run with exaggerated affinities.
    pub exaggeration_iterations: usize,
    pub learning_rate: f64,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    /// Iteration at which momentum switches from initial to final.
    pub momentum_switch_iteration: usize,
    pub perplexity_tolerance: f64,
    pub max_bisection_steps: usize,
    /// Standard deviation of the Gaussian initialization.
    pub init_std: f64,
    /// Record the loss every this many iterations (plus the end of the
    /// exaggeration phase and the final iteration).
    pub trace_every: usize,
    pub seed: u64,
}

impl Default for TsneParams {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            early_exaggeration_factor: 12.0,
            exaggeration_iterations: 250,
            learning_rate: 200.0,
            momentum_initial: 0.5,
            momentum_final: 0.8,
            momentum_switch_iteration: 250,
            perplexity_tolerance: 1e-5,
            max_bisection_steps: 50,
            init_std: 1e-4,
            trace_every: 50,
            seed: 0,
        }
    }
}

impl TsneParams {
    pub fn validate(&self) -> Result<(), TsneError> {
        let positive = [
            ("perplexity", self.perplexity),
            ("early_exaggeration_factor", self.early_exaggeration_factor),
            ("learning_rate", self.learning_rate),
            ("perplexity_tolerance", self.perplexity_tolerance),
            ("init_std", self.init_std),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(TsneError::InvalidParams(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("momentum_initial", self.momentum_initial),
            ("momentum_final", self.momentum_final),
        ] {
            if !(v.is_finite() && (0.0..1.0).contains(&v)) {
                return Err(TsneError::InvalidParams(format!(
                    "{name} must lie in [0, 1), got {v}"
                )));
            }
        }
        if self.iterations == 0 {
            return Err(TsneError::InvalidParams("iterations must be >= 1".into()));
        }
        if self.max_bisection_steps == 0 {
            return Err(TsneError::InvalidParams(
                "max_bisection_steps must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Joint probabilities `P` over sample pairs.
///
/// Symmetric, non-negative, zero diagonal, entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix(FeatureMatrix);

impl AffinityMatrix {
    /// Wraps a matrix after checking the invariants (tolerance 1e-9 on the sum).
    pub fn new(p: FeatureMatrix) -> Result<Self, TsneError> {
        let n = p.rows();
        if p.cols() != n {
            return Err(TsneError::Shape(format!(
                "affinity matrix must be square, got {}x{}",
                n,
                p.cols()
            )));
        }
        let mut total = 0.0;
        for i in 0..n {
            if p.get(i, i) != 0.0 {
                return Err(TsneError::Shape(format!("non-zero diagonal at {i}")));
            }
            for j in 0..n {
                let v = p.get(i, j);
                if !(v >= 0.0) || v != p.get(j, i) {
                    return Err(TsneError::Shape(format!(
                        "entry ({i},{j}) is negative or asymmetric"
                    )));
                }
                total += v;
            }
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(TsneError::Shape(format!("entries sum to {total}, not 1")));
        }
        Ok(Self(p))
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &FeatureMatrix {
        &self.0
    }
}

/// `n x 2` embedding coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding2D(FeatureMatrix);

impl Embedding2D {
    pub fn new(y: FeatureMatrix) -> Result<Self, TsneError> {
        if y.cols() != 2 {
            return Err(TsneError::Shape(format!(
                "embedding must have 2 columns, got {}",
                y.cols()
            )));
        }
        if !y.is_finite() {
            return Err(TsneError::Shape("embedding has non-finite entries".into()));
        }
        Ok(Self(y))
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }

    pub fn point(&self, i: usize) -> [f64; 2] {
        let r = self.0.row(i);
        [r[0], r[1]]
    }

    pub fn matrix(&self) -> &FeatureMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> FeatureMatrix {
        self.0
    }
}

/// Squared Euclidean distances between all rows.
///
/// Entry `(i, j)` and `(j, i)` are computed with the same operation order, so
/// the result is exactly symmetric.
pub fn pairwise_sq_distances(x: &FeatureMatrix) -> FeatureMatrix {
    let n = x.rows();
    let mut out = FeatureMatrix::zeros(n, n);
    par::for_each_row_mut(out.as_mut_slice(), n, |i, row| {
        let xi = x.row(i);
        for (j, slot) in row.iter_mut().enumerate() {
            if j != i {
                *slot = sq_dist(xi, x.row(j));
            }
        }
    });
    out
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Row-conditional affinities `p(j|i)` together with calibration diagnostics.
#[derive(Debug, Clone)]
pub struct ConditionalAffinities {
    pub matrix: FeatureMatrix,
    /// Calibrated Gaussian precision per row.
    pub betas: Vec<f64>,
    /// Perplexity actually achieved per row.
    pub achieved_perplexity: Vec<f64>,
    /// Rows whose bisection hit `max_bisection_steps` before reaching tolerance.
    pub unconverged: Vec<usize>,
}

struct RowCalibration {
    probs: Vec<f64>,
    beta: f64,
    perplexity: f64,
    converged: bool,
}

/// Bisects a Gaussian precision per row so that each row's perplexity
/// `exp(H)` matches `params.perplexity`.
pub fn calibrate_perplexity(
    d: &FeatureMatrix,
    params: &TsneParams,
) -> Result<ConditionalAffinities, TsneError> {
    let n = d.rows();
    if d.cols() != n {
        return Err(TsneError::Shape("distance matrix must be square".into()));
    }
    if n < 2 {
        return Err(TsneError::TooFewSamples(n));
    }
    if !(params.perplexity > 0.0 && params.perplexity < n as f64) {
        return Err(TsneError::InvalidParams(format!(
            "perplexity {} must lie in (0, n = {n})",
            params.perplexity
        )));
    }
    let rows = par::map_range(n, |i| calibrate_row(d.row(i), i, params));
    let mut matrix = FeatureMatrix::zeros(n, n);
    let mut betas = Vec::with_capacity(n);
    let mut achieved = Vec::with_capacity(n);
    let mut unconverged = Vec::new();
    for (i, row) in rows.into_iter().enumerate() {
        let row = row?;
        matrix.row_mut(i).copy_from_slice(&row.probs);
        betas.push(row.beta);
        achieved.push(row.perplexity);
        if !row.converged {
            unconverged.push(i);
        }
    }
    Ok(ConditionalAffinities {
        matrix,
        betas,
        achieved_perplexity: achieved,
        unconverged,
    })
}

fn calibrate_row(dist: &[f64], i: usize, params: &TsneParams) -> Result<RowCalibration, TsneError> {
    let n = dist.len();
    let others = || (0..n).filter(move |&j| j != i);
    let dmin = others().map(|j| dist[j]).fold(f64::INFINITY, f64::min);
    let dmax = others().map(|j| dist[j]).fold(0.0, f64::max);
    if dmax == 0.0 {
        return Err(TsneError::DegenerateRow { row: i });
    }
    // shift by the nearest distance so at least one kernel term is exactly 1
    let shifted: Vec<f64> = (0..n).map(|j| if j == i { 0.0 } else { dist[j] - dmin }).collect();
    let mean_shift = others().map(|j| shifted[j]).sum::<f64>() / (n - 1) as f64;

    let target = params.perplexity;
    let mut beta = if mean_shift > 0.0 { 1.0 / mean_shift } else { 1.0 };
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let mut probs = vec![0.0; n];
    let mut perplexity = 0.0;
    let mut converged = false;
    for _ in 0..params.max_bisection_steps {
        perplexity = row_kernel(&shifted, i, beta, &mut probs);
        let diff = perplexity - target;
        if diff.abs() < params.perplexity_tolerance {
            converged = true;
            break;
        }
        if diff > 0.0 {
            // distribution too flat, sharpen the kernel
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = if lo.is_finite() { (beta + lo) / 2.0 } else { beta / 2.0 };
        }
    }
    if !converged {
        perplexity = row_kernel(&shifted, i, beta, &mut probs);
    }
    Ok(RowCalibration {
        probs,
        beta,
        perplexity,
        converged,
    })
}

/// Fills `probs` with the normalized kernel for one row and returns its perplexity.
fn row_kernel(shifted: &[f64], i: usize, beta: f64, probs: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (j, (&d, p)) in shifted.iter().zip(probs.iter_mut()).enumerate() {
        if j == i {
            *p = 0.0;
            continue;
        }
        let v = (-d * beta).exp();
        *p = v;
        sum += v;
        weighted += d * v;
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
    let entropy = sum.ln() + beta * weighted / sum;
    entropy.exp()
}

/// `P = (C + C^T) / 2n`, floored at [`AFFINITY_FLOOR`] off the diagonal and
/// renormalized when the floor was applied.
pub fn symmetrize(cond: &FeatureMatrix) -> AffinityMatrix {
    let n = cond.rows();
    let denom = 2.0 * n as f64;
    let mut p = FeatureMatrix::zeros(n, n);
    let mut floored = false;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut v = (cond.get(i, j) + cond.get(j, i)) / denom;
            if v < AFFINITY_FLOOR {
                v = AFFINITY_FLOOR;
                floored = true;
            }
            p.set(i, j, v);
        }
    }
    if floored {
        let total: f64 = p.as_slice().iter().sum();
        for v in p.as_mut_slice() {
            *v /= total;
        }
    }
    AffinityMatrix(p)
}

fn check_shapes(p: &AffinityMatrix, y: &Embedding2D) -> Result<(), TsneError> {
    if p.n() != y.n() {
        return Err(TsneError::Shape(format!(
            "affinities cover {} samples, embedding has {}",
            p.n(),
            y.n()
        )));
    }
    Ok(())
}

#[inline]
fn student_kernel(a: &[f64], b: &[f64]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    1.0 / (1.0 + dx * dx + dy * dy)
}

/// Normalizer `Z = sum_{i != j} (1 + |y_i - y_j|^2)^-1`, reduced in row order.
fn kernel_normalizer(y: &FeatureMatrix) -> f64 {
    let n = y.rows();
    let row_sums = par::map_range(n, |i| {
        let yi = y.row(i);
        let mut s = 0.0;
        for j in 0..n {
            if j != i {
                s += student_kernel(yi, y.row(j));
            }
        }
        s
    });
    row_sums.into_iter().sum()
}

/// `KL(P || Q)` with Student-t affinities `Q` in the embedding.
pub fn kl_divergence(p: &AffinityMatrix, y: &Embedding2D) -> Result<f64, TsneError> {
    check_shapes(p, y)?;
    Ok(kl_unchecked(p.matrix(), y.matrix()))
}

fn kl_unchecked(p: &FeatureMatrix, y: &FeatureMatrix) -> f64 {
    let n = y.rows();
    let z = kernel_normalizer(y);
    let row_terms = par::map_range(n, |i| {
        let yi = y.row(i);
        let mut s = 0.0;
        for j in 0..n {
            let pij = p.get(i, j);
            if j == i || pij <= 0.0 {
                continue;
            }
            let q = student_kernel(yi, y.row(j)) / z;
            s += pij * (pij / q).ln();
        }
        s
    });
    row_terms.into_iter().sum::<f64>().max(0.0)
}

/// Gradient of [`kl_divergence`] with respect to the embedding coordinates.
pub fn kl_gradient(p: &AffinityMatrix, y: &Embedding2D) -> Result<FeatureMatrix, TsneError> {
    check_shapes(p, y)?;
    let mut grad = FeatureMatrix::zeros(y.n(), 2);
    gradient_into(p.matrix(), 1.0, y.matrix(), &mut grad);
    Ok(grad)
}

/// Writes `4 sum_j (a P_ij - Q_ij) w_ij (y_i - y_j)` into `grad`, where `a` is
/// the exaggeration factor.
fn gradient_into(p: &FeatureMatrix, exaggeration: f64, y: &FeatureMatrix, grad: &mut FeatureMatrix) {
    let n = y.rows();
    let z = kernel_normalizer(y);
    par::for_each_row_mut(grad.as_mut_slice(), 2, |i, g| {
        let yi = y.row(i);
        let (mut gx, mut gy) = (0.0, 0.0);
        for j in 0..n {
            if j == i {
                continue;
            }
            let yj = y.row(j);
            let w = student_kernel(yi, yj);
            let m = (exaggeration * p.get(i, j) - w / z) * w;
            gx += m * (yi[0] - yj[0]);
            gy += m * (yi[1] - yj[1]);
        }
        g[0] = 4.0 * gx;
        g[1] = 4.0 * gy;
    });
}

/// Result of a traced t-SNE run.
#[derive(Debug, Clone)]
pub struct TsneOutput {
    pub embedding: Embedding2D,
    /// `(iteration, KL)` pairs; iteration counts completed updates.
    pub trace: Vec<(usize, f64)>,
    /// Rows whose perplexity calibration did not reach tolerance.
    pub unconverged_rows: Vec<usize>,
    /// Perplexity after clamping to `(n - 1) / 3`.
    pub effective_perplexity: f64,
}

pub fn tsne_embed(x: &FeatureMatrix, params: &TsneParams) -> Result<Embedding2D, TsneError> {
    tsne_embed_traced(x, params).map(|o| o.embedding)
}

/// Full t-SNE run returning the loss trace alongside the embedding.
pub fn tsne_embed_traced(x: &FeatureMatrix, params: &TsneParams) -> Result<TsneOutput, TsneError> {
    params.validate()?;
    let n = x.rows();
    if n < 4 {
        return Err(TsneError::TooFewSamples(n));
    }
    if !x.is_finite() {
        return Err(TsneError::Shape("input features contain non-finite values".into()));
    }
    let effective_perplexity = params.perplexity.min((n - 1) as f64 / 3.0);
    let calib_params = TsneParams {
        perplexity: effective_perplexity,
        ..params.clone()
    };
    let d = pairwise_sq_distances(x);
    let cond = calibrate_perplexity(&d, &calib_params)?;
    drop(d);
    let p = symmetrize(&cond.matrix);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let normal = Normal::new(0.0, params.init_std)
        .map_err(|e| TsneError::InvalidParams(e.to_string()))?;
    let init: Vec<f64> = (0..2 * n).map(|_| normal.sample(&mut rng)).collect();
    let mut y = FeatureMatrix::from_vec(n, 2, init).expect("2n values");

    let mut grad = FeatureMatrix::zeros(n, 2);
    let mut update = vec![0.0; 2 * n];
    let mut gains = vec![1.0_f64; 2 * n];
    let mut trace = Vec::new();

    for it in 0..params.iterations {
        let exaggeration = if it < params.exaggeration_iterations {
            params.early_exaggeration_factor
        } else {
            1.0
        };
        let momentum = if it < params.momentum_switch_iteration {
            params.momentum_initial
        } else {
            params.momentum_final
        };
        gradient_into(p.matrix(), exaggeration, &y, &mut grad);
        if !grad.is_finite() {
            return Err(TsneError::Divergence { iteration: it + 1 });
        }
        let yv = y.as_mut_slice();
        for k in 0..2 * n {
            let g = grad.as_slice()[k];
            gains[k] = if (g > 0.0) != (update[k] > 0.0) {
                gains[k] + 0.2
            } else {
                (gains[k] * 0.8).max(0.01)
            };
            update[k] = momentum * update[k] - params.learning_rate * gains[k] * g;
            yv[k] += update[k];
        }
        recenter(&mut y);

        let done = it + 1;
        let record = done == params.iterations
            || done == params.exaggeration_iterations
            || (params.trace_every > 0 && done % params.trace_every == 0);
        if record {
            let kl = kl_unchecked(p.matrix(), &y);
            if !kl.is_finite() || !y.is_finite() {
                return Err(TsneError::Divergence { iteration: done });
            }
            trace.push((done, kl));
        }
    }
    if !y.is_finite() {
        return Err(TsneError::Divergence {
            iteration: params.iterations,
        });
    }
    Ok(TsneOutput {
        embedding: Embedding2D(y),
        trace,
        unconverged_rows: cond.unconverged,
        effective_perplexity,
    })
}

fn recenter(y: &mut FeatureMatrix) {
    let n = y.rows() as f64;
    let (mut mx, mut my) = (0.0, 0.0);
    for r in y.iter_rows() {
        mx += r[0];
        my += r[1];
    }
    mx /= n;
    my /= n;
    for i in 0..y.rows() {
        let r = y.row_mut(i);
        r[0] -= mx;
        r[1] -= my;
    }
}

//! Linear SVM trained by stochastic subgradient descent (Pegasos) on
//!
//! ```text
//! λ/2 ‖w‖² + (1/n) Σ max(0, 1 − yᵢ (w·xᵢ + b)),   λ = 1 / (C n)
//! ```
//!
//! The bias is an extra weight on a constant feature of value 1 and is
//! regularized together with `w`. Step size is `1/(λ t)`. Samples are visited
//! in a seeded random order each epoch; the epoch-end iterate with the lowest
//! objective (starting from the all-zero model) is returned.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SparseVector;

pub const DEFAULT_EPOCHS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn decision(&self, x: &SparseVector) -> f64 {
        x.dot_dense(&self.weights) + self.bias
    }
}

pub fn lambda(c: f64, n: usize) -> f64 {
    1.0 / (c * n as f64)
}

/// Regularized hinge objective of `model` on `(xs, ys)`; labels are ±1.
pub fn objective(model: &LinearModel, xs: &[SparseVector], ys: &[f64], lambda: f64) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let reg = model.weights.iter().map(|w| w * w).sum::<f64>() + model.bias * model.bias;
    let hinge: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| (1.0 - y * model.decision(x)).max(0.0))
        .sum();
    0.5 * lambda * reg + hinge / xs.len() as f64
}

/// `w = scale · v`, with the bias stored as the last coordinate of `v`.
struct ScaledWeights {
    scale: f64,
    v: Vec<f64>,
    v_norm_sq: f64,
}

impl ScaledWeights {
    fn new(dim: usize) -> Self {
        Self {
            scale: 1.0,
            v: vec![0.0; dim + 1],
            v_norm_sq: 0.0,
        }
    }

    fn bias_index(&self) -> usize {
        self.v.len() - 1
    }

    fn dot(&self, x: &SparseVector) -> f64 {
        self.scale * (x.dot_dense(&self.v) + self.v[self.bias_index()])
    }

    fn norm_sq(&self) -> f64 {
        self.scale * self.scale * self.v_norm_sq
    }

    fn rescale(&mut self, factor: f64) {
        if factor == 0.0 {
            self.v.iter_mut().for_each(|x| *x = 0.0);
            self.v_norm_sq = 0.0;
            self.scale = 1.0;
            return;
        }
        self.scale *= factor;
        if self.scale.abs() < 1e-9 {
            let s = self.scale;
            self.v.iter_mut().for_each(|x| *x *= s);
            self.v_norm_sq *= s * s;
            self.scale = 1.0;
        }
    }

    /// `w += a · [x, 1]`
    fn add(&mut self, a: f64, x: &SparseVector) {
        let step = a / self.scale;
        for (i, xi) in x.iter() {
            let vi = &mut self.v[i as usize];
            let new = *vi + step * xi;
            self.v_norm_sq += new * new - *vi * *vi;
            *vi = new;
        }
        let b = self.bias_index();
        let new = self.v[b] + step;
        self.v_norm_sq += new * new - self.v[b] * self.v[b];
        self.v[b] = new;
    }

    fn to_model(&self) -> LinearModel {
        let b = self.bias_index();
        LinearModel {
            weights: self.v[..b].iter().map(|x| x * self.scale).collect(),
            bias: self.v[b] * self.scale,
        }
    }
}

/// Train a binary classifier. `ys` holds ±1 labels.
pub fn train_binary(
    xs: &[SparseVector],
    ys: &[f64],
    dim: usize,
    params: SvmParams,
    seed: u64,
) -> LinearModel {
    assert_eq!(xs.len(), ys.len(), "features and labels differ in length");
    let n = xs.len();
    let mut best = LinearModel::zeros(dim);
    if n == 0 {
        return best;
    }
    let lambda = lambda(params.c, n);
    let radius_sq = 1.0 / lambda;
    let mut best_obj = objective(&best, xs, ys, lambda);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut w = ScaledWeights::new(dim);
    let mut t: u64 = 0;

    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let margin = ys[i] * w.dot(&xs[i]);
            w.rescale(1.0 - eta * lambda);
            if margin < 1.0 {
                w.add(eta * ys[i], &xs[i]);
            }
            let norm_sq = w.norm_sq();
            if norm_sq > radius_sq {
                w.rescale((radius_sq / norm_sq).sqrt());
            }
        }
        let candidate = w.to_model();
        let obj = objective(&candidate, xs, ys, lambda);
        if obj < best_obj {
            best_obj = obj;
            best = candidate;
        }
    }
    best
}

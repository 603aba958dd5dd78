//! One-vs-rest linear SVM trained by subgradient descent on the hinge loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::dot;

#[derive(Debug, Clone, PartialEq)]
pub struct SvmConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub reg: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            epochs: 200,
            learning_rate: 0.01,
            reg: 1e-3,
            seed: 0,
        }
    }
}

/// Features are standardized with the training mean and standard deviation
/// before scoring.
#[derive(Debug, Clone)]
pub struct LinearSvm {
    mean: Vec<f64>,
    scale: Vec<f64>,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl LinearSvm {
    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let z = self.standardize(x);
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| dot(w, &z) + b)
            .collect()
    }

    /// Highest-scoring class, ties to the lowest label.
    pub fn predict(&self, x: &[f64]) -> usize {
        let scores = self.scores(x);
        let mut best = 0;
        for (c, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = c;
            }
        }
        best
    }

    pub fn n_classes(&self) -> usize {
        self.weights.len()
    }
}

/// Trains `n_classes` binary hinge-loss models. Labels must be `< n_classes`
/// and at least two distinct labels must be present.
pub fn train_classifier(x: &[Vec<f64>], y: &[usize], n_classes: usize, cfg: &SvmConfig) -> Result<LinearSvm> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::argument("need matching, non-empty features and labels"));
    }
    if y.iter().any(|&l| l >= n_classes) {
        return Err(Error::argument("label outside class range"));
    }
    let first = y[0];
    if y.iter().all(|&l| l == first) {
        return Err(Error::argument("classifier needs at least two classes"));
    }
    let dim = x[0].len();
    let n = x.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|d| x.iter().map(|r| r[d]).sum::<f64>() / n).collect();
    let scale: Vec<f64> = (0..dim)
        .map(|d| {
            let var = x.iter().map(|r| (r[d] - mean[d]).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let mut model = LinearSvm {
        mean,
        scale,
        weights: vec![vec![0.0; dim]; n_classes],
        bias: vec![0.0; n_classes],
    };
    let z: Vec<Vec<f64>> = x.iter().map(|r| model.standardize(r)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..x.len()).collect();
    let shrink = 1.0 - cfg.learning_rate * cfg.reg;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            for c in 0..n_classes {
                let target = if y[i] == c { 1.0 } else { -1.0 };
                let margin = target * (dot(&model.weights[c], &z[i]) + model.bias[c]);
                let w = &mut model.weights[c];
                w.iter_mut().for_each(|v| *v *= shrink);
                if margin < 1.0 {
                    for (v, f) in w.iter_mut().zip(&z[i]) {
                        *v += cfg.learning_rate * target * f;
                    }
                    model.bias[c] += cfg.learning_rate * target;
                }
            }
        }
    }
    Ok(model)
}

//! Shared-weight CBOW over assets.
//!
//! A single `|U| x N` matrix `W` serves both as the input lookup table and as
//! the output projection: the hidden layer is the (weighted) mean of the
//! context rows, and the posterior over targets is `softmax(W h)`. Training
//! minimizes cross-entropy with plain per-set SGD.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::context::{weights_for_set, ContextSet, CooccurrenceMatrix};
use crate::data::{validate_assets, AssetMeta};
use crate::error::{Error, Result};

/// Row-major embedding table, one row per asset.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || dim == 0 {
            return Err(Error::validation("embedding matrix must be non-empty"));
        }
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::validation("embedding rows differ in length"));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("embedding has a non-finite entry"));
        }
        Ok(EmbeddingMatrix {
            rows: data.len() / dim,
            dim,
            data,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }
}

/// Entries i.i.d. uniform on `[-0.5/N, 0.5/N]`.
pub fn init_embeddings(n_assets: usize, dim: usize, seed: u64) -> Result<EmbeddingMatrix> {
    if n_assets == 0 || dim == 0 {
        return Err(Error::argument("embedding shape must be at least 1x1"));
    }
    let bound = 0.5 / dim as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n_assets * dim)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Ok(EmbeddingMatrix {
        rows: n_assets,
        dim,
        data,
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hidden layer: `sum_j w_j * W[ctx_j]`, with `w_j = 1/C` when no weights are given.
pub fn hidden(w: &EmbeddingMatrix, set: &ContextSet, weights: Option<&[f64]>) -> Vec<f64> {
    let uniform;
    let weights = match weights {
        Some(ws) => ws,
        None => {
            uniform = vec![1.0 / set.context.len() as f64; set.context.len()];
            &uniform
        }
    };
    let mut h = vec![0.0; w.dim];
    for (&j, &wj) in set.context.iter().zip(weights) {
        for (acc, x) in h.iter_mut().zip(w.row(j)) {
            *acc += wj * x;
        }
    }
    h
}

fn logits(w: &EmbeddingMatrix, h: &[f64]) -> Vec<f64> {
    (0..w.rows).map(|k| dot(w.row(k), h)).collect()
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = z.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    p
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Posterior over targets, `softmax(W h)`.
pub fn forward(w: &EmbeddingMatrix, h: &[f64]) -> Vec<f64> {
    softmax(&logits(w, h))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardResult {
    pub hidden: Vec<f64>,
    pub probs: Vec<f64>,
}

pub fn predict(w: &EmbeddingMatrix, set: &ContextSet, weights: Option<&[f64]>) -> ForwardResult {
    let h = hidden(w, set, weights);
    let probs = forward(w, &h);
    ForwardResult { hidden: h, probs }
}

/// Gradient of the cross-entropy loss for one set.
///
/// Every row receives the output term `(p_k - y_k) h`; each context row `j`
/// additionally receives `w_j * W^T (p - y)` through the hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub output_coeffs: Vec<f64>,
    pub hidden: Vec<f64>,
    pub hidden_grad: Vec<f64>,
    pub context: Vec<(usize, f64)>,
}

impl Gradients {
    pub fn row(&self, k: usize) -> Vec<f64> {
        let mut g: Vec<f64> = self.hidden.iter().map(|h| self.output_coeffs[k] * h).collect();
        for &(j, wj) in &self.context {
            if j == k {
                for (gi, d) in g.iter_mut().zip(&self.hidden_grad) {
                    *gi += wj * d;
                }
            }
        }
        g
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        (0..self.output_coeffs.len()).map(|k| self.row(k)).collect()
    }

    fn apply(&self, w: &mut EmbeddingMatrix, lr: f64) {
        for (k, &coef) in self.output_coeffs.iter().enumerate() {
            let step = lr * coef;
            for (x, h) in w.row_mut(k).iter_mut().zip(&self.hidden) {
                *x -= step * h;
            }
        }
        for &(j, wj) in &self.context {
            let step = lr * wj;
            for (x, d) in w.row_mut(j).iter_mut().zip(&self.hidden_grad) {
                *x -= step * d;
            }
        }
    }
}

pub fn loss_and_grads(w: &EmbeddingMatrix, set: &ContextSet, weights: Option<&[f64]>) -> (f64, Gradients) {
    let c = set.context.len();
    let ws: Vec<f64> = match weights {
        Some(ws) => ws.to_vec(),
        None => vec![1.0 / c as f64; c],
    };
    let h = hidden(w, set, Some(&ws));
    let z = logits(w, &h);
    let loss = log_sum_exp(&z) - z[set.target];
    let mut coeffs = softmax(&z);
    coeffs[set.target] -= 1.0;

    let mut hidden_grad = vec![0.0; w.dim];
    for (k, &g) in coeffs.iter().enumerate() {
        for (acc, x) in hidden_grad.iter_mut().zip(w.row(k)) {
            *acc += g * x;
        }
    }
    let grads = Gradients {
        output_coeffs: coeffs,
        hidden: h,
        hidden_grad,
        context: set.context.iter().copied().zip(ws).collect(),
    };
    (loss, grads)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub context_size: usize,
    pub dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub use_iqr: bool,
    pub use_weighting: bool,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            context_size: 3,
            dim: 20,
            learning_rate: 0.025,
            epochs: 10,
            seed: 42,
            use_iqr: false,
            use_weighting: false,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    /// A learning rate of exactly zero is accepted and leaves the
    /// initialization untouched.
    pub fn validate(&self, n_assets: usize) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::argument(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::argument("epochs must be at least 1"));
        }
        if self.dim == 0 {
            return Err(Error::argument("embedding dimension must be at least 1"));
        }
        if self.context_size == 0 || self.context_size >= n_assets {
            return Err(Error::argument(format!(
                "context size {} must lie in [1, {n_assets})",
                self.context_size
            )));
        }
        Ok(())
    }

    /// Short label of the noise-reduction variant.
    pub fn variant_name(&self) -> &'static str {
        match (self.use_weighting, self.use_iqr) {
            (false, false) => "Embedding",
            (false, true) => "Embedding+IQR",
            (true, false) => "Embedding+Weight",
            (true, true) => "Embedding+Weight+IQR",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub embeddings: EmbeddingMatrix,
    /// Mean loss over each epoch's sets.
    pub epoch_losses: Vec<f64>,
}

pub fn train(
    cfg: &TrainConfig,
    n_assets: usize,
    sets: &[ContextSet],
    beta: Option<&CooccurrenceMatrix>,
) -> Result<TrainOutcome> {
    cfg.validate(n_assets)?;
    let init = init_embeddings(n_assets, cfg.dim, cfg.seed)?;
    train_from(cfg, init, sets, beta)
}

/// Runs SGD from a given starting matrix.
pub fn train_from(
    cfg: &TrainConfig,
    mut w: EmbeddingMatrix,
    sets: &[ContextSet],
    beta: Option<&CooccurrenceMatrix>,
) -> Result<TrainOutcome> {
    let n = w.n_assets();
    cfg.validate(n)?;
    let weights: Option<Vec<Vec<f64>>> = match (cfg.use_weighting, beta) {
        (true, Some(beta)) => {
            if beta.n_assets() != n {
                return Err(Error::argument("co-occurrence matrix shape mismatch"));
            }
            Some(sets.iter().map(|s| weights_for_set(beta, s)).collect())
        }
        (true, None) => return Err(Error::argument("weighting requires a co-occurrence matrix")),
        (false, _) => None,
    };
    for s in sets {
        if s.target >= n || s.context.iter().any(|&j| j >= n) {
            return Err(Error::argument(format!(
                "set at t={} references an asset outside {n}",
                s.time
            )));
        }
        if s.context.len() != cfg.context_size {
            return Err(Error::argument(format!(
                "set at t={} has {} context assets, expected {}",
                s.time,
                s.context.len(),
                cfg.context_size
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..sets.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        for (step, &idx) in order.iter().enumerate() {
            let ws = weights.as_ref().map(|all| all[idx].as_slice());
            let (loss, grads) = loss_and_grads(&w, &sets[idx], ws);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            total += loss;
            grads.apply(&mut w, cfg.learning_rate);
        }
        let mean = if sets.is_empty() { 0.0 } else { total / sets.len() as f64 };
        log::debug!("epoch {epoch}: mean loss {mean:.6}");
        epoch_losses.push(mean);
    }
    if w.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteLoss {
            epoch: cfg.epochs.saturating_sub(1),
            step: sets.len(),
        });
    }
    Ok(TrainOutcome {
        embeddings: w,
        epoch_losses,
    })
}

/// Writes `ticker,sector,industry,e1,...,eN` with 17 significant digits.
pub fn save_embeddings(path: impl AsRef<Path>, w: &EmbeddingMatrix, assets: &[AssetMeta]) -> Result<()> {
    if assets.len() != w.n_assets() {
        return Err(Error::argument(format!(
            "{} assets for {} embedding rows",
            assets.len(),
            w.n_assets()
        )));
    }
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut out = csv::Writer::from_writer(file);
    let mut header = vec!["ticker".to_string(), "sector".into(), "industry".into()];
    header.extend((1..=w.dim).map(|k| format!("e{k}")));
    out.write_record(&header)?;
    for (a, i) in assets.iter().zip(0..) {
        let mut rec = vec![a.ticker.clone(), a.sector.clone(), a.industry.clone()];
        rec.extend(w.row(i).iter().map(|x| format!("{x:.16e}")));
        out.write_record(&rec)?;
    }
    out.into_inner()
        .map_err(|e| Error::Io(e.into_error()))?
        .flush()?;
    Ok(())
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<(EmbeddingMatrix, Vec<AssetMeta>)> {
    let path = path.as_ref();
    let format_err = |message: String| Error::Format {
        path: PathBuf::from(path),
        message,
    };
    let text = std::fs::read_to_string(path)?;
    // saved files always end with a record terminator
    if !text.ends_with('\n') {
        return Err(format_err("file is truncated".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let dim = header.len().saturating_sub(3);
    let header_ok = dim > 0
        && header.iter().take(3).eq(["ticker", "sector", "industry"])
        && header.iter().skip(3).zip(1..).all(|(h, k)| h == format!("e{k}"));
    if !header_ok {
        return Err(format_err("bad header".into()));
    }
    let mut assets = Vec::new();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| format_err(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != dim + 3 {
            return Err(format_err(format!(
                "line {line}: {} fields, expected {}",
                record.len(),
                dim + 3
            )));
        }
        let row = record
            .iter()
            .skip(3)
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| format_err(format!("line {line}: {e}")))?;
        assets.push(AssetMeta::new(assets.len(), &record[0], &record[1], &record[2]));
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(format_err("no embedding rows".into()));
    }
    validate_assets(&assets).map_err(|e| format_err(e.to_string()))?;
    let w = EmbeddingMatrix::from_rows(rows).map_err(|e| format_err(e.to_string()))?;
    Ok((w, assets))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(target: usize, context: &[usize]) -> ContextSet {
        ContextSet::new(target, 0, context.to_vec()).unwrap()
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = init_embeddings(30, 20, 7).unwrap();
        assert_eq!(a, init_embeddings(30, 20, 7).unwrap());
        assert_ne!(a, init_embeddings(30, 20, 8).unwrap());
        assert!(a.data.iter().all(|x| x.abs() <= 0.5 / 20.0));
        assert_eq!(TrainConfig::default().dim, 20);
        assert_eq!(TrainConfig::default().context_size, 3);
    }

    #[test]
    fn hidden_averages_or_weights() {
        let w = EmbeddingMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![3.0, 3.0]]).unwrap();
        let s = set(2, &[0, 1]);
        assert_eq!(hidden(&w, &s, None), vec![0.5, 0.5]);
        assert_eq!(hidden(&w, &s, Some(&[1.0, 0.0])), vec![1.0, 0.0]);
        assert_eq!(hidden(&w, &s, Some(&[0.5, 0.5])), hidden(&w, &s, None));
    }

    #[test]
    fn equal_rows_or_zero_hidden_are_uniform() {
        let w = EmbeddingMatrix::from_rows(vec![vec![0.3, -0.2]; 5]).unwrap();
        for p in forward(&w, &[1.0, 2.0]) {
            assert!((p - 0.2).abs() < 1e-15);
        }
        let w = init_embeddings(4, 3, 1).unwrap();
        assert_eq!(forward(&w, &[0.0; 3]), vec![0.25; 4]);
    }

    #[test]
    fn uniform_posterior_loss_is_log_u() {
        let w = EmbeddingMatrix::from_rows(vec![vec![0.1, 0.2]; 7]).unwrap();
        let (loss, _) = loss_and_grads(&w, &set(0, &[1, 2]), None);
        assert!((loss - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn target_output_gradient_opposes_hidden() {
        let w = init_embeddings(6, 4, 3).unwrap();
        let s = set(2, &[0, 5]);
        let (_, g) = loss_and_grads(&w, &s, None);
        assert!(g.output_coeffs[2] < 0.0);
        // row 2 is not in the context, so its gradient is the output term only
        assert!(dot(&g.row(2), &g.hidden) < 0.0);
    }

    #[test]
    fn zero_learning_rate_keeps_init() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            dim: 4,
            context_size: 2,
            epochs: 2,
            ..TrainConfig::default()
        };
        let sets = vec![set(0, &[1, 2]), set(3, &[0, 1])];
        let out = train(&cfg, 4, &sets, None).unwrap();
        assert_eq!(out.embeddings, init_embeddings(4, 4, cfg.seed).unwrap());
    }

    #[test]
    fn config_validation() {
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate(10).is_err());
        let cfg = TrainConfig {
            context_size: 10,
            ..TrainConfig::default()
        };
        assert!(cfg.validate(10).is_err());
        let cfg = TrainConfig {
            learning_rate: -0.1,
            ..TrainConfig::default()
        };
        assert!(cfg.validate(10).is_err());
        assert!(TrainConfig::default().validate(10).is_ok());
    }

    #[test]
    fn weighting_without_beta_is_rejected() {
        let cfg = TrainConfig {
            use_weighting: true,
            context_size: 2,
            ..TrainConfig::default()
        };
        assert!(train(&cfg, 4, &[set(0, &[1, 2])], None).is_err());
    }

    #[test]
    fn variant_names() {
        let mut cfg = TrainConfig::default();
        assert_eq!(cfg.variant_name(), "Embedding");
        cfg.use_iqr = true;
        assert_eq!(cfg.variant_name(), "Embedding+IQR");
        cfg.use_weighting = true;
        assert_eq!(cfg.variant_name(), "Embedding+Weight+IQR");
        cfg.use_iqr = false;
        assert_eq!(cfg.variant_name(), "Embedding+Weight");
    }

    #[test]
    fn fixture_file_parses() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        std::fs::write(
            &p,
            "ticker,sector,industry,e1,e2\nJPM,Finance,Major Banks,1.5,-2\n\"XOM\",Energy,\"Oil, Integrated\",0,2.5e-1\n",
        )
        .unwrap();
        let (w, assets) = load_embeddings(&p).unwrap();
        assert_eq!(w.to_rows(), vec![vec![1.5, -2.0], vec![0.0, 0.25]]);
        assert_eq!(assets[1].industry, "Oil, Integrated");
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        let w = init_embeddings(3, 5, 11).unwrap();
        let assets = vec![
            AssetMeta::new(0, "A", "Finance", "Major Banks"),
            AssetMeta::new(1, "B", "Energy", "Oil, Gas"),
            AssetMeta::new(2, "C", "Technology", "Chips"),
        ];
        save_embeddings(&p, &w, &assets).unwrap();
        let (w2, a2) = load_embeddings(&p).unwrap();
        assert_eq!(w, w2);
        assert_eq!(assets, a2);
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        let w = init_embeddings(3, 5, 11).unwrap();
        let assets: Vec<_> = (0..3).map(|i| AssetMeta::new(i, format!("T{i}"), "S", "I")).collect();
        save_embeddings(&p, &w, &assets).unwrap();
        let full = std::fs::read_to_string(&p).unwrap();
        for cut in [full.len() - 30, full.len() / 2, 10] {
            std::fs::write(&p, &full[..cut]).unwrap();
            assert!(
                matches!(load_embeddings(&p), Err(Error::Format { .. })),
                "cut at {cut} was accepted"
            );
        }
    }
}

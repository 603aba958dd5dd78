//! Two-asset hedged portfolios and their out-of-sample volatility.
//!
//! For every query asset the hedge is the least similar other asset under a
//! similarity fitted on the training period; the equal-weight, daily
//! rebalanced pair is then simulated on the test period. Volatility is the
//! sample standard deviation of daily portfolio returns annualized by
//! `sqrt(252)`.
//!
//! Mean volatilities are compared with a two-sided permutation test on the
//! difference of means, Holm step-down corrected across all method pairs.
//! This replaces a Tukey HSD test and is labelled as such in reports.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{pairwise_scores, ScoreMatrix, SimilarityMethod};
use crate::data::ReturnsMatrix;
use crate::error::{Error, Result};
use crate::stats;

pub const TRADING_DAYS: f64 = 252.0;

pub const SIGNIFICANCE_TEST_LABEL: &str = "permutation test (difference of means), Holm-corrected";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HedgedPortfolio {
    query: usize,
    hedge: usize,
}

impl HedgedPortfolio {
    /// Equal 0.5/0.5 weights; the two legs must differ.
    pub fn new(query: usize, hedge: usize) -> Result<Self> {
        if query == hedge {
            return Err(Error::argument("an asset cannot hedge itself"));
        }
        Ok(HedgedPortfolio { query, hedge })
    }

    pub fn query(&self) -> usize {
        self.query
    }

    pub fn hedge(&self) -> usize {
        self.hedge
    }
}

/// Index of the lowest score in the query's row, excluding the query itself.
pub fn most_dissimilar(scores: &ScoreMatrix, query: usize) -> Result<usize> {
    let n = scores.n_assets();
    if n < 2 || query >= n {
        return Err(Error::argument(format!("query {query} in a universe of {n}")));
    }
    let row = scores.row(query);
    let mut best: Option<usize> = None;
    for j in (0..n).filter(|&j| j != query) {
        if best.is_none_or(|b| row[j] < row[b]) {
            best = Some(j);
        }
    }
    Ok(best.expect("n >= 2"))
}

/// The `pool` lowest-scoring candidates, ascending score then index.
pub fn least_similar(scores: &ScoreMatrix, query: usize, pool: usize) -> Vec<usize> {
    let row = scores.row(query);
    let mut cands: Vec<usize> = (0..scores.n_assets()).filter(|&j| j != query).collect();
    cands.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    cands.truncate(pool);
    cands
}

pub fn portfolio_returns(test: &ReturnsMatrix, p: HedgedPortfolio) -> Vec<f64> {
    test.row(p.query)
        .iter()
        .zip(test.row(p.hedge))
        .map(|(a, b)| 0.5 * (a + b))
        .collect()
}

pub fn portfolio_volatility(test: &ReturnsMatrix, p: HedgedPortfolio) -> Result<f64> {
    if test.len() < 2 {
        return Err(Error::argument("volatility needs at least 2 test periods"));
    }
    Ok(stats::sample_std(&portfolio_returns(test, p)) * TRADING_DAYS.sqrt())
}

/// A named similarity used for hedge selection.
#[derive(Debug, Clone, Copy)]
pub struct HedgeMethod<'a> {
    pub name: &'a str,
    pub similarity: SimilarityMethod<'a>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HedgeResult {
    pub method: String,
    pub hedges: Vec<usize>,
    pub volatilities: Vec<f64>,
}

impl HedgeResult {
    pub fn mean_volatility(&self) -> f64 {
        stats::mean(&self.volatilities)
    }
}

fn check_hygiene(method: &HedgeMethod<'_>, test: &ReturnsMatrix) -> Result<()> {
    let train = match method.similarity {
        SimilarityMethod::EmbeddingCosine(_) => return Ok(()),
        SimilarityMethod::Pearson(r) | SimilarityMethod::Spearman(r) | SimilarityMethod::Geometric(r) => r,
    };
    if train.n_assets() != test.n_assets() {
        return Err(Error::argument("train and test universes differ"));
    }
    if let (Some(last), Some(first)) = (train.dates().last(), test.dates().first()) {
        if last >= first {
            return Err(Error::argument(format!(
                "{}: training data ends {last}, after the test period starts {first}",
                method.name
            )));
        }
    }
    Ok(())
}

fn scores_for(methods: &[HedgeMethod<'_>], test: &ReturnsMatrix) -> Result<Vec<ScoreMatrix>> {
    methods
        .iter()
        .map(|m| {
            check_hygiene(m, test)?;
            let s = pairwise_scores(&m.similarity)?;
            if s.n_assets() != test.n_assets() {
                return Err(Error::argument(format!("{}: universe size mismatch", m.name)));
            }
            Ok(s)
        })
        .collect()
}

/// One portfolio per query asset and method, hedged with the least similar asset.
pub fn run_experiment(methods: &[HedgeMethod<'_>], test: &ReturnsMatrix) -> Result<Vec<HedgeResult>> {
    let scores = scores_for(methods, test)?;
    methods
        .iter()
        .zip(&scores)
        .map(|(m, s)| experiment_from_scores(m.name, s, test))
        .collect()
}

pub fn experiment_from_scores(name: &str, scores: &ScoreMatrix, test: &ReturnsMatrix) -> Result<HedgeResult> {
    let n = test.n_assets();
    let mut hedges = Vec::with_capacity(n);
    let mut volatilities = Vec::with_capacity(n);
    for q in 0..n {
        let h = most_dissimilar(scores, q)?;
        hedges.push(h);
        volatilities.push(portfolio_volatility(test, HedgedPortfolio::new(q, h)?)?);
    }
    Ok(HedgeResult {
        method: name.to_string(),
        hedges,
        volatilities,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessResult {
    pub method: String,
    /// Mean volatility over all queries, one per run.
    pub run_means: Vec<f64>,
    /// `hedges[run][query]`.
    pub hedges: Vec<Vec<usize>>,
}

/// Repeats the experiment, drawing each hedge uniformly from the query's
/// `pool` least similar assets.
pub fn robustness_rerun(
    methods: &[HedgeMethod<'_>],
    test: &ReturnsMatrix,
    n_runs: usize,
    pool: usize,
    seed: u64,
) -> Result<Vec<RobustnessResult>> {
    let scores = scores_for(methods, test)?;
    methods
        .iter()
        .zip(&scores)
        .enumerate()
        .map(|(k, (m, s))| robustness_from_scores(m.name, s, test, n_runs, pool, seed, k as u64))
        .collect()
}

pub fn robustness_from_scores(
    name: &str,
    scores: &ScoreMatrix,
    test: &ReturnsMatrix,
    n_runs: usize,
    pool: usize,
    seed: u64,
    stream: u64,
) -> Result<RobustnessResult> {
    let n = test.n_assets();
    if pool == 0 || pool >= n {
        return Err(Error::argument(format!("pool {pool} must lie in [1, {n})")));
    }
    let pools: Vec<Vec<usize>> = (0..n).map(|q| least_similar(scores, q, pool)).collect();
    // volatility of (query, pools[query][slot]), filled on demand
    let mut cache: Vec<Vec<Option<f64>>> = vec![vec![None; pool]; n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut run_means = Vec::with_capacity(n_runs);
    let mut hedges = Vec::with_capacity(n_runs);
    for _ in 0..n_runs {
        let mut chosen = Vec::with_capacity(n);
        let mut total = 0.0;
        for q in 0..n {
            let slot = if pool == 1 { 0 } else { rng.random_range(0..pool) };
            let h = pools[q][slot];
            let vol = match cache[q][slot] {
                Some(v) => v,
                None => {
                    let v = portfolio_volatility(test, HedgedPortfolio::new(q, h)?)?;
                    cache[q][slot] = Some(v);
                    v
                }
            };
            total += vol;
            chosen.push(h);
        }
        run_means.push(total / n as f64);
        hedges.push(chosen);
    }
    Ok(RobustnessResult {
        method: name.to_string(),
        run_means,
        hedges,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairComparison {
    pub first: String,
    pub second: String,
    /// Mean of `first` minus mean of `second`.
    pub mean_difference: f64,
    pub p_value: f64,
    pub p_adjusted: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceConfig {
    pub alpha: f64,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        SignificanceConfig {
            alpha: 0.01,
            resamples: 50_000,
            seed: 0,
        }
    }
}

/// Two-sided permutation p-value for a difference in means, with the usual
/// `(hits + 1) / (resamples + 1)` estimate.
pub fn permutation_p_value(a: &[f64], b: &[f64], resamples: usize, rng: &mut impl Rng) -> f64 {
    let na = a.len();
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let total: f64 = pooled.iter().sum();
    let nb = pooled.len() - na;
    let diff = |sum_a: f64| sum_a / na as f64 - (total - sum_a) / nb as f64;
    let observed = diff(a.iter().sum()).abs();
    let slack = 1e-12 * (observed.abs() + pooled.iter().map(|v| v.abs()).fold(0.0, f64::max));
    let mut hits = 0usize;
    for _ in 0..resamples {
        let mut sum_a = 0.0;
        // partial Fisher-Yates: the first `na` slots form the resampled group
        for i in 0..na {
            let j = rng.random_range(i..pooled.len());
            pooled.swap(i, j);
            sum_a += pooled[i];
        }
        if diff(sum_a).abs() >= observed - slack {
            hits += 1;
        }
    }
    (hits + 1) as f64 / (resamples + 1) as f64
}

/// Holm step-down adjusted p-values, in input order.
pub fn holm_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &i) in order.iter().enumerate() {
        running = running.max(((m - rank) as f64 * p[i]).min(1.0));
        adjusted[i] = running;
    }
    adjusted
}

/// All-pairs comparison of mean volatility between methods.
pub fn significance_test(samples: &[(String, Vec<f64>)], cfg: &SignificanceConfig) -> Result<Vec<PairComparison>> {
    if samples.len() < 2 {
        return Err(Error::argument("need at least two samples"));
    }
    let n = samples[0].1.len();
    if n < 2 || samples.iter().any(|(_, s)| s.len() != n) {
        return Err(Error::argument("samples must share a size of at least 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            let (a, b) = (&samples[i].1, &samples[j].1);
            out.push(PairComparison {
                first: samples[i].0.clone(),
                second: samples[j].0.clone(),
                mean_difference: stats::mean(a) - stats::mean(b),
                p_value: permutation_p_value(a, b, cfg.resamples, &mut rng),
                p_adjusted: 0.0,
                reject: false,
            });
        }
    }
    let raw: Vec<f64> = out.iter().map(|c| c.p_value).collect();
    for (c, adj) in out.iter_mut().zip(holm_adjust(&raw)) {
        c.p_adjusted = adj;
        c.reject = adj < cfg.alpha;
    }
    Ok(out)
}

/// Histogram of volatilities in percent, bins `[k, k+1)` percentage points
/// covering the observed range.
pub fn volatility_histogram(volatilities: &[f64]) -> Vec<(f64, f64, usize)> {
    if volatilities.is_empty() {
        return Vec::new();
    }
    let pct: Vec<f64> = volatilities.iter().map(|v| v * 100.0).collect();
    let lo = pct.iter().copied().fold(f64::INFINITY, f64::min).floor() as i64;
    let hi = pct.iter().copied().fold(f64::NEG_INFINITY, f64::max).floor() as i64;
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    for v in pct {
        counts[(v.floor() as i64 - lo) as usize] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| ((lo + k as i64) as f64, (lo + k as i64 + 1) as f64, c))
        .collect()
}

pub fn write_histogram(path: impl AsRef<Path>, volatilities: &[f64]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "bin_low,bin_high,count")?;
    for (lo, hi, c) in volatility_histogram(volatilities) {
        writeln!(out, "{lo},{hi},{c}")?;
    }
    out.flush()?;
    Ok(())
}

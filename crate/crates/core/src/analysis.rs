//! Querying embeddings and comparing them with return-based similarity.
//!
//! Everything here is read-only over immutable inputs. Ties in any ranking are
//! broken by ascending asset index.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use log::warn;

use crate::data::{AssetMeta, ReturnsMatrix};
use crate::error::{Error, Result};
use crate::model::{dot, EmbeddingMatrix};
use crate::stats;

/// Pairwise similarity definitions.
///
/// `Geometric` is a proxy: `1 / (1 + d)` with `d` the Euclidean distance
/// between z-scored return series. It stands in for a published shape
/// similarity whose exact formula is not available here, and is labelled as
/// a proxy wherever it is reported.
#[derive(Debug, Clone, Copy)]
pub enum SimilarityMethod<'a> {
    EmbeddingCosine(&'a EmbeddingMatrix),
    Pearson(&'a ReturnsMatrix),
    Spearman(&'a ReturnsMatrix),
    Geometric(&'a ReturnsMatrix),
}

impl SimilarityMethod<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            SimilarityMethod::EmbeddingCosine(_) => "Embedding",
            SimilarityMethod::Pearson(_) => "Pearson",
            SimilarityMethod::Spearman(_) => "Spearman",
            SimilarityMethod::Geometric(_) => "Geometric (proxy)",
        }
    }

    pub fn n_assets(&self) -> usize {
        match self {
            SimilarityMethod::EmbeddingCosine(w) => w.n_assets(),
            SimilarityMethod::Pearson(r) | SimilarityMethod::Spearman(r) | SimilarityMethod::Geometric(r) => {
                r.n_assets()
            }
        }
    }
}

/// Per-asset vectors after method-specific preprocessing.
enum Prepared {
    /// Unit vectors; `None` marks a degenerate (constant) series scored 0.
    Correlation(Vec<Option<Vec<f64>>>),
    Distance(Vec<Vec<f64>>),
}

impl Prepared {
    fn new(method: &SimilarityMethod<'_>) -> Result<Self> {
        Ok(match method {
            SimilarityMethod::EmbeddingCosine(w) => {
                let rows = (0..w.n_assets())
                    .map(|i| unit(w.row(i)).map(Some).ok_or(Error::ZeroVector))
                    .collect::<Result<Vec<_>>>()?;
                Prepared::Correlation(rows)
            }
            SimilarityMethod::Pearson(r) => Prepared::Correlation(centered_units(r, |row| row.to_vec())),
            SimilarityMethod::Spearman(r) => Prepared::Correlation(centered_units(r, stats::average_ranks)),
            SimilarityMethod::Geometric(r) => Prepared::Distance(r.rows().iter().map(|row| z_score(row)).collect()),
        })
    }

    fn score(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        match self {
            Prepared::Correlation(rows) => match (&rows[i], &rows[j]) {
                (Some(a), Some(b)) => dot(a, b).clamp(-1.0, 1.0),
                _ => 0.0,
            },
            Prepared::Distance(rows) => {
                let d = rows[i]
                    .iter()
                    .zip(&rows[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                1.0 / (1.0 + d)
            }
        }
    }

    fn len(&self) -> usize {
        match self {
            Prepared::Correlation(r) => r.len(),
            Prepared::Distance(r) => r.len(),
        }
    }
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let norm = dot(v, v).sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| v.iter().map(|x| x / norm).collect())
}

fn centered_units(r: &ReturnsMatrix, transform: impl Fn(&[f64]) -> Vec<f64>) -> Vec<Option<Vec<f64>>> {
    r.rows()
        .iter()
        .zip(r.assets())
        .map(|(row, asset)| {
            let x = transform(row);
            let m = stats::mean(&x);
            let centered: Vec<f64> = x.iter().map(|v| v - m).collect();
            let u = unit(&centered);
            if u.is_none() {
                warn!("`{}` has zero variance; its correlations are set to 0", asset.ticker);
            }
            u
        })
        .collect()
}

fn z_score(x: &[f64]) -> Vec<f64> {
    let m = stats::mean(x);
    let sd = if x.len() > 1 { stats::sample_std(x) } else { 0.0 };
    if sd > 0.0 {
        x.iter().map(|v| (v - m) / sd).collect()
    } else {
        vec![0.0; x.len()]
    }
}

/// Cosine similarity; errors when either vector is zero.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Square symmetric score matrix with ones on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    scores: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    pub fn from_rows(scores: Vec<Vec<f64>>) -> Result<Self> {
        let n = scores.len();
        if scores.iter().any(|r| r.len() != n) {
            return Err(Error::validation("score matrix is not square"));
        }
        Ok(ScoreMatrix { scores })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scores[i][j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i]
    }

    pub fn n_assets(&self) -> usize {
        self.scores.len()
    }
}

pub fn pairwise_scores(method: &SimilarityMethod<'_>) -> Result<ScoreMatrix> {
    let prepared = Prepared::new(method)?;
    let n = prepared.len();
    let mut scores = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let s = prepared.score(i, j);
            scores[i][j] = s;
            scores[j][i] = s;
        }
    }
    Ok(ScoreMatrix { scores })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub score: f64,
}

fn descending(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.score.total_cmp(&a.score).then(a.index.cmp(&b.index))
}

fn top_k(mut cands: Vec<Neighbor>, k: usize) -> Vec<Neighbor> {
    cands.sort_by(descending);
    cands.truncate(k);
    cands
}

/// The `k` most similar assets to `query`, most similar first.
pub fn knn(method: &SimilarityMethod<'_>, query: usize, k: usize) -> Result<Vec<Neighbor>> {
    let prepared = Prepared::new(method)?;
    let n = prepared.len();
    if query >= n {
        return Err(Error::argument(format!("query {query} outside {n} assets")));
    }
    if k >= n {
        return Err(Error::argument(format!("k = {k} must be below {n}")));
    }
    let cands = (0..n)
        .filter(|&j| j != query)
        .map(|j| Neighbor {
            index: j,
            score: prepared.score(query, j),
        })
        .collect();
    Ok(top_k(cands, k))
}

/// Candidates ranked by cosine to `W[b] - W[a] + W[c]`, excluding `a`, `b`, `c`.
pub fn analogy(w: &EmbeddingMatrix, a: usize, b: usize, c: usize, k: usize) -> Result<Vec<Neighbor>> {
    let n = w.n_assets();
    if a == b || b == c || a == c {
        return Err(Error::argument("analogy terms must be distinct"));
    }
    if [a, b, c].iter().any(|&x| x >= n) {
        return Err(Error::argument(format!("analogy term outside {n} assets")));
    }
    let query: Vec<f64> = (0..w.dim())
        .map(|d| w.row(b)[d] - w.row(a)[d] + w.row(c)[d])
        .collect();
    let mut cands = Vec::with_capacity(n - 3);
    for j in (0..n).filter(|j| ![a, b, c].contains(j)) {
        cands.push(Neighbor {
            index: j,
            score: cosine(&query, w.row(j))?,
        });
    }
    Ok(top_k(cands, k))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub score: f64,
}

/// Undirected edges `i < j` with embedding cosine strictly above `threshold`.
pub fn similarity_graph(w: &EmbeddingMatrix, threshold: f64) -> Result<Vec<Edge>> {
    if !(threshold > -1.0 && threshold < 1.0) {
        return Err(Error::argument(format!("threshold {threshold} outside (-1, 1)")));
    }
    let scores = pairwise_scores(&SimilarityMethod::EmbeddingCosine(w))?;
    let n = scores.n_assets();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let s = scores.get(i, j);
            if s > threshold {
                edges.push(Edge {
                    source: i,
                    target: j,
                    score: s,
                });
            }
        }
    }
    Ok(edges)
}

/// High-similarity pairs whose sector labels differ, most similar first.
pub fn mismatches(w: &EmbeddingMatrix, assets: &[AssetMeta], threshold: f64) -> Result<Vec<Edge>> {
    if assets.len() != w.n_assets() {
        return Err(Error::argument("asset list does not match embedding rows"));
    }
    let mut out: Vec<Edge> = similarity_graph(w, threshold)?
        .into_iter()
        .filter(|e| assets[e.source].sector != assets[e.target].sector)
        .collect();
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.source.cmp(&b.source))
            .then(a.target.cmp(&b.target))
    });
    Ok(out)
}

/// Writes `source_ticker,target_ticker,weight`.
pub fn write_edges(path: impl AsRef<Path>, edges: &[Edge], assets: &[AssetMeta]) -> Result<()> {
    let mut out = csv::Writer::from_path(path)?;
    out.write_record(["source_ticker", "target_ticker", "weight"])?;
    for e in edges {
        out.write_record([
            assets[e.source].ticker.as_str(),
            assets[e.target].ticker.as_str(),
            &format!("{:.6}", e.score),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Plain-text table of ranked neighbours.
pub fn format_neighbors(neighbors: &[Neighbor], assets: &[AssetMeta]) -> String {
    let mut s = Vec::new();
    writeln!(s, "{:<4} {:<10} {:<24} {:<32} {:>10}", "rank", "ticker", "sector", "industry", "similarity").ok();
    for (rank, nb) in neighbors.iter().enumerate() {
        let a = &assets[nb.index];
        writeln!(
            s,
            "{:<4} {:<10} {:<24} {:<32} {:>10.4}",
            rank + 1,
            a.ticker,
            a.sector,
            a.industry,
            nb.score
        )
        .ok();
    }
    String::from_utf8(s).unwrap_or_default()
}

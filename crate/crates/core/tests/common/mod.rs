#![allow(dead_code)]

use assetvec::fixture::business_days;
use assetvec::{AssetMeta, EmbeddingMatrix, ReturnsMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn assets(n: usize) -> Vec<AssetMeta> {
    (0..n)
        .map(|i| AssetMeta::new(i, format!("A{i:03}"), format!("S{}", i % 4), format!("I{}", i % 8)))
        .collect()
}

/// Random returns; `grid > 0` rounds to multiples of `1/grid` to force ties.
pub fn random_returns(n: usize, t: usize, grid: f64, seed: u64) -> ReturnsMatrix {
    let mut r = rng(seed);
    let rows = (0..n)
        .map(|_| {
            (0..t)
                .map(|_| {
                    let x: f64 = r.random_range(-0.05..0.05);
                    if grid > 0.0 {
                        (x * grid).round() / grid
                    } else {
                        x
                    }
                })
                .collect()
        })
        .collect();
    ReturnsMatrix::new(assets(n), business_days(t + 1)[1..].to_vec(), rows).unwrap()
}

pub fn random_embeddings(n: usize, dim: usize, scale: f64, seed: u64) -> EmbeddingMatrix {
    let mut r = rng(seed);
    let rows = (0..n)
        .map(|_| (0..dim).map(|_| r.random_range(-scale..scale)).collect())
        .collect();
    EmbeddingMatrix::from_rows(rows).unwrap()
}

pub fn cosine_naive(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    dot / (nu * nv)
}

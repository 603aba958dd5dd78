//! Synthetic minority oversampling.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Where a resampled row came from, as row indices of the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Original(usize),
    Synthetic { base: usize, neighbor: usize },
}

#[derive(Debug, Clone)]
pub struct Resampled {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
    pub origin: Vec<Origin>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Upsamples every class to the majority count.
///
/// Originals come first, in input order, followed by synthetic rows grouped
/// by ascending label. Each synthetic row is `x + u (x_nn - x)` with `u`
/// uniform on `[0, 1)` and `x_nn` drawn from the `k` nearest same-class
/// neighbours of `x` (`k` capped at class size - 1). A class with a single
/// member can only be replicated; this is reported as a warning.
pub fn smote(x: &[Vec<f64>], y: &[usize], k_neighbors: usize, seed: u64) -> Result<Resampled> {
    if x.len() != y.len() {
        return Err(Error::argument("feature and label counts differ"));
    }
    if k_neighbors == 0 {
        return Err(Error::argument("k_neighbors must be at least 1"));
    }
    let n_labels = y.iter().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); n_labels];
    for (i, &label) in y.iter().enumerate() {
        members[label].push(i);
    }
    let majority = members.iter().map(Vec::len).max().unwrap_or(0);

    let mut out = Resampled {
        x: x.to_vec(),
        y: y.to_vec(),
        origin: (0..x.len()).map(Origin::Original).collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (label, class) in members.iter().enumerate() {
        if class.is_empty() || class.len() == majority {
            continue;
        }
        if class.len() == 1 {
            warn!("class {label} has a single sample; SMOTE replicates it");
        }
        let k = k_neighbors.min(class.len() - 1).max(1);
        let neighbours: Vec<Vec<usize>> = class
            .iter()
            .map(|&i| {
                if class.len() == 1 {
                    return vec![i];
                }
                let mut others: Vec<(f64, usize)> = class
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| (sq_dist(&x[i], &x[j]), j))
                    .collect();
                others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                others.into_iter().take(k).map(|(_, j)| j).collect()
            })
            .collect();

        for _ in 0..majority - class.len() {
            let pick = rng.random_range(0..class.len());
            let base = class[pick];
            let neighbor = neighbours[pick][rng.random_range(0..neighbours[pick].len())];
            let u: f64 = rng.random();
            out.x.push(
                x[base]
                    .iter()
                    .zip(&x[neighbor])
                    .map(|(a, b)| a + u * (b - a))
                    .collect(),
            );
            out.y.push(label);
            out.origin.push(Origin::Synthetic { base, neighbor });
        }
    }
    Ok(out)
}

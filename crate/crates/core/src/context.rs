//! Target:context training sets built from same-day return proximity.
//!
//! For every asset `i` and period `t`, the context is the `C` other assets
//! whose return at `t` is closest to asset `i`'s. An optional filter keeps only
//! sets whose target moved outside that day's interquartile range, and the
//! co-occurrence rates collected over the kept sets drive the weighted hidden
//! layer of the model.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use crate::data::ReturnsMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ContextSet {
    pub target: usize,
    pub time: usize,
    pub context: Vec<usize>,
}

impl ContextSet {
    pub fn new(target: usize, time: usize, context: Vec<usize>) -> Result<Self> {
        if context.contains(&target) {
            return Err(Error::validation(format!(
                "target {target} appears in its own context"
            )));
        }
        let mut sorted = context.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::validation("context has repeated assets"));
        }
        Ok(ContextSet {
            target,
            time,
            context,
        })
    }
}

/// Ordering on `(|difference|, index)`, total over finite and non-finite values.
fn by_distance(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// The `count` assets whose return is closest to the target's, nearest first,
/// ties by ascending index.
pub fn closest_contexts(returns_col: &[f64], target: usize, count: usize) -> Result<Vec<usize>> {
    let n = returns_col.len();
    if target >= n {
        return Err(Error::argument(format!("target {target} outside {n} assets")));
    }
    if count == 0 || count >= n {
        return Err(Error::argument(format!(
            "context size {count} must lie in [1, {n})"
        )));
    }
    let r = returns_col[target];
    let mut cands: Vec<(f64, usize)> = returns_col
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != target)
        .map(|(j, &x)| ((r - x).abs(), j))
        .collect();
    if count < cands.len() {
        cands.select_nth_unstable_by(count - 1, by_distance);
        cands.truncate(count);
    }
    cands.sort_unstable_by(by_distance);
    Ok(cands.into_iter().map(|(_, j)| j).collect())
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
pub(crate) fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// First and third quartiles of one cross-section (the target included).
pub fn quartiles(returns_col: &[f64]) -> (f64, f64) {
    let mut sorted = returns_col.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    (percentile_sorted(&sorted, 0.25), percentile_sorted(&sorted, 0.75))
}

/// Whether the target's move is outside the day's interquartile range.
pub fn iqr_retain(returns_col: &[f64], target: usize) -> bool {
    let (q1, q3) = quartiles(returns_col);
    outside(returns_col[target], q1, q3)
}

fn outside(r: f64, q1: f64, q3: f64) -> bool {
    r < q1 || r > q3
}

/// All sets in `(t, target)` order, optionally IQR-filtered.
pub fn build_context_sets(returns: &ReturnsMatrix, count: usize, apply_iqr: bool) -> Result<Vec<ContextSet>> {
    let n = returns.n_assets();
    if count == 0 || count >= n {
        return Err(Error::argument(format!(
            "context size {count} must lie in [1, {n})"
        )));
    }
    if apply_iqr && n < 4 {
        return Err(Error::argument("IQR filtering needs at least 4 assets"));
    }
    let mut sets = Vec::with_capacity(n * returns.len());
    for t in 0..returns.len() {
        let col = returns.column(t);
        let bounds = apply_iqr.then(|| quartiles(&col));
        for target in 0..n {
            if let Some((q1, q3)) = bounds {
                if !outside(col[target], q1, q3) {
                    continue;
                }
            }
            sets.push(ContextSet {
                target,
                time: t,
                context: closest_contexts(&col, target, count)?,
            });
        }
    }
    Ok(sets)
}

/// Co-occurrence rates: `beta[i][j]` is the number of sets with target `i`
/// whose context contains `j`, divided by `periods`.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceMatrix {
    beta: Vec<Vec<f64>>,
}

impl CooccurrenceMatrix {
    pub fn from_rows(beta: Vec<Vec<f64>>) -> Result<Self> {
        let n = beta.len();
        for (i, row) in beta.iter().enumerate() {
            if row.len() != n {
                return Err(Error::validation("co-occurrence matrix is not square"));
            }
            if row.iter().any(|b| !(0.0..=1.0).contains(b)) {
                return Err(Error::validation(format!("row {i} has a rate outside [0, 1]")));
            }
            if row[i] != 0.0 {
                return Err(Error::validation(format!("nonzero diagonal at {i}")));
            }
        }
        Ok(CooccurrenceMatrix { beta })
    }

    /// Equal off-diagonal rate `value` everywhere.
    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        Self::from_rows(
            (0..n)
                .map(|i| (0..n).map(|j| if i == j { 0.0 } else { value }).collect())
                .collect(),
        )
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.beta[i][j]
    }

    pub fn n_assets(&self) -> usize {
        self.beta.len()
    }

    /// Multiplies every rate by `c`, without the `[0, 1]` check.
    pub fn scaled(&self, c: f64) -> Self {
        CooccurrenceMatrix {
            beta: self
                .beta
                .iter()
                .map(|row| row.iter().map(|b| b * c).collect())
                .collect(),
        }
    }
}

pub fn cooccurrence(sets: &[ContextSet], n_assets: usize, periods: usize) -> Result<CooccurrenceMatrix> {
    if periods == 0 {
        return Err(Error::argument("zero periods"));
    }
    let mut counts = vec![vec![0u32; n_assets]; n_assets];
    for s in sets {
        if s.target >= n_assets || s.context.iter().any(|&j| j >= n_assets) {
            return Err(Error::argument(format!(
                "set at t={} references an asset outside {n_assets}",
                s.time
            )));
        }
        for &j in &s.context {
            counts[s.target][j] += 1;
        }
    }
    let t = periods as f64;
    let beta = counts
        .into_iter()
        .map(|row| row.into_iter().map(|c| (c as f64 / t).min(1.0)).collect())
        .collect();
    CooccurrenceMatrix::from_rows(beta)
}

/// Normalized co-occurrence weights of one set's context.
///
/// Falls back to exactly `1/C` each when all rates are equal or all are zero,
/// which reproduces the plain averaging hidden layer.
pub fn weights_for_set(beta: &CooccurrenceMatrix, set: &ContextSet) -> Vec<f64> {
    let c = set.context.len();
    let rates: Vec<f64> = set.context.iter().map(|&j| beta.get(set.target, j)).collect();
    let total: f64 = rates.iter().sum();
    if total.is_nan() || total <= 0.0 || rates.iter().all(|&b| b == rates[0]) {
        return vec![1.0 / c as f64; c];
    }
    rates.into_iter().map(|b| b / total).collect()
}

/// Writes sets as `t,target,ctx1,...,ctxC`.
pub fn write_context_sets(path: impl AsRef<Path>, sets: &[ContextSet]) -> Result<()> {
    let c = sets.first().map_or(0, |s| s.context.len());
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header: Vec<String> = ["t".to_string(), "target".to_string()]
        .into_iter()
        .chain((1..=c).map(|k| format!("ctx{k}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for s in sets {
        write!(out, "{},{}", s.time, s.target)?;
        for j in &s.context {
            write!(out, ",{j}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AssetMeta;

    #[test]
    fn closest_picks_smallest_differences() {
        let col = [0.050, 0.051, 0.049, 0.200, -0.050];
        assert_eq!(closest_contexts(&col, 0, 2).unwrap(), vec![1, 2]);
    }

    #[test]
    fn ties_broken_by_index() {
        let col = [0.01; 6];
        assert_eq!(closest_contexts(&col, 0, 3).unwrap(), vec![1, 2, 3]);
        assert_eq!(closest_contexts(&col, 2, 3).unwrap(), vec![0, 1, 3]);
    }

    #[test]
    fn oversized_context_is_rejected() {
        let col = [0.0; 4];
        assert!(matches!(closest_contexts(&col, 0, 4), Err(Error::Argument(_))));
        assert!(matches!(closest_contexts(&col, 0, 0), Err(Error::Argument(_))));
        assert!(closest_contexts(&col, 0, 3).is_ok());
    }

    #[test]
    fn iqr_examples() {
        let col = [-0.10, -0.01, 0.00, 0.01, 0.10];
        assert!(!iqr_retain(&col, 2));
        assert!(iqr_retain(&col, 4));
        assert!(iqr_retain(&col, 0));
        // Q1 = -0.01 exactly, so the boundary itself is inside
        assert!(!iqr_retain(&col, 1));
    }

    #[test]
    fn quartiles_interpolate() {
        let (q1, q3) = quartiles(&[4.0, 1.0, 3.0, 2.0]);
        assert!((q1 - 1.75).abs() < 1e-15);
        assert!((q3 - 3.25).abs() < 1e-15);
    }

    fn returns(rows: Vec<Vec<f64>>) -> ReturnsMatrix {
        let assets = (0..rows.len())
            .map(|i| AssetMeta::new(i, format!("A{i}"), "S", "I"))
            .collect();
        let start = chrono::NaiveDate::from_ymd_opt(2001, 1, 1).unwrap();
        let dates = (0..rows[0].len() as i64)
            .map(|d| start + chrono::Duration::days(d))
            .collect();
        ReturnsMatrix::new(assets, dates, rows).unwrap()
    }

    #[test]
    fn set_counts() {
        let r = returns(vec![
            vec![0.01, -0.02, 0.03],
            vec![0.02, 0.00, -0.01],
            vec![-0.03, 0.01, 0.00],
            vec![0.00, 0.02, 0.02],
            vec![0.05, -0.05, 0.01],
        ]);
        let all = build_context_sets(&r, 2, false).unwrap();
        assert_eq!(all.len(), 15);
        assert_eq!((all[0].time, all[0].target), (0, 0));
        assert_eq!((all[5].time, all[5].target), (1, 0));

        let kept = build_context_sets(&r, 2, true).unwrap();
        for s in &kept {
            assert!(iqr_retain(&r.column(s.time), s.target));
        }
        let expected = (0..3)
            .map(|t| (0..5).filter(|&i| iqr_retain(&r.column(t), i)).count())
            .sum::<usize>();
        assert_eq!(kept.len(), expected);
        assert!(kept.len() < all.len());
    }

    #[test]
    fn full_cooccurrence() {
        let sets = vec![
            ContextSet::new(0, 0, vec![1, 2]).unwrap(),
            ContextSet::new(0, 1, vec![1, 3]).unwrap(),
        ];
        let beta = cooccurrence(&sets, 4, 2).unwrap();
        assert_eq!(beta.get(0, 1), 1.0);
        assert_eq!(beta.get(0, 2), 0.5);
        assert_eq!(beta.get(1, 0), 0.0);
        assert_eq!(beta.get(2, 3), 0.0);
    }

    #[test]
    fn weights_normalize() {
        let mut rows = vec![vec![0.0; 3]; 3];
        rows[0][1] = 0.2;
        rows[0][2] = 0.3;
        let beta = CooccurrenceMatrix::from_rows(rows).unwrap();
        let s = ContextSet::new(0, 0, vec![1, 2]).unwrap();
        let w = weights_for_set(&beta, &s);
        assert!((w[0] - 0.4).abs() < 1e-15 && (w[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn weights_fall_back_to_uniform() {
        let s = ContextSet::new(0, 0, vec![1, 2, 3]).unwrap();
        let equal = CooccurrenceMatrix::uniform(4, 0.37).unwrap();
        assert_eq!(weights_for_set(&equal, &s), vec![1.0 / 3.0; 3]);
        let zero = CooccurrenceMatrix::uniform(4, 0.0).unwrap();
        assert_eq!(weights_for_set(&zero, &s), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn context_set_validation() {
        assert!(ContextSet::new(1, 0, vec![0, 1]).is_err());
        assert!(ContextSet::new(1, 0, vec![0, 0]).is_err());
    }

    #[test]
    fn writes_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sets.csv");
        let sets = vec![ContextSet::new(0, 3, vec![270, 359, 410]).unwrap()];
        write_context_sets(&p, &sets).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "t,target,ctx1,ctx2,ctx3\n3,0,270,359,410\n"
        );
    }
}

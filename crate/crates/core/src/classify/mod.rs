//! Sector classification from embeddings: SMOTE, a linear SVM and stratified
//! k-fold evaluation with macro-averaged metrics.

mod smote;
mod svm;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use smote::{smote, Origin, Resampled};
pub use svm::{train_classifier, LinearSvm, SvmConfig};

use crate::data::AssetMeta;
use crate::error::{Error, Result};
use crate::model::EmbeddingMatrix;

/// Feature rows with dense class ids into a sorted label list.
#[derive(Debug, Clone)]
pub struct LabeledVectors {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
    pub classes: Vec<String>,
    /// Input row index of every kept row.
    pub source_rows: Vec<usize>,
}

impl LabeledVectors {
    /// Drops rows whose label occurs only once.
    pub fn new(x: Vec<Vec<f64>>, labels: &[String]) -> Result<Self> {
        if x.len() != labels.len() {
            return Err(Error::argument("feature and label counts differ"));
        }
        let count = |l: &String| labels.iter().filter(|m| *m == l).count();
        let classes: Vec<String> = labels
            .iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .filter(|l| {
                let keep = count(l) >= 2;
                if !keep {
                    warn!("class `{l}` has a single member; excluded");
                }
                keep
            })
            .cloned()
            .collect();
        let mut out = LabeledVectors {
            x: Vec::new(),
            y: Vec::new(),
            classes,
            source_rows: Vec::new(),
        };
        for (i, (row, label)) in x.into_iter().zip(labels).enumerate() {
            if let Ok(c) = out.classes.binary_search(label) {
                out.x.push(row);
                out.y.push(c);
                out.source_rows.push(i);
            }
        }
        if out.classes.len() < 2 {
            return Err(Error::argument("need at least two classes with two members"));
        }
        Ok(out)
    }

    /// Embedding rows labelled by sector.
    pub fn from_embeddings(w: &EmbeddingMatrix, assets: &[AssetMeta]) -> Result<Self> {
        if w.n_assets() != assets.len() {
            return Err(Error::argument("asset list does not match embedding rows"));
        }
        let labels: Vec<String> = assets.iter().map(|a| a.sector.clone()).collect();
        Self::new(w.to_rows(), &labels)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyConfig {
    pub folds: usize,
    pub smote_k: usize,
    pub svm: SvmConfig,
    pub seed: u64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            folds: 5,
            smote_k: 5,
            svm: SvmConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Per-fold bookkeeping, in row indices of the evaluated [`LabeledVectors`].
#[derive(Debug, Clone)]
pub struct FoldTrace {
    pub test_rows: Vec<usize>,
    /// Every row that served as a base or neighbour of a synthetic sample.
    pub synthetic_sources: BTreeSet<usize>,
}

#[derive(Debug, Clone)]
pub struct ClassificationReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[truth][predicted]`, pooled over held-out folds.
    pub confusion: Vec<Vec<usize>>,
    pub folds: Vec<FoldTrace>,
}

/// Stratified fold assignment: members of each class are shuffled and dealt
/// round-robin, continuing the deal across classes.
pub fn stratified_folds(y: &[usize], n_classes: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        if members.len() < folds {
            warn!(
                "class {c} has {} members for {folds} folds; not every fold will contain it",
                members.len()
            );
        }
        members.shuffle(&mut rng);
        for i in members {
            out[next % folds].push(i);
            next += 1;
        }
    }
    for f in &mut out {
        f.sort_unstable();
    }
    out
}

pub fn kfold_eval(data: &LabeledVectors, cfg: &ClassifyConfig) -> Result<ClassificationReport> {
    let k = cfg.folds;
    if k < 2 {
        return Err(Error::argument("need at least 2 folds"));
    }
    if data.len() < k {
        return Err(Error::argument(format!("{} samples for {k} folds", data.len())));
    }
    let n_classes = data.classes.len();
    let folds = stratified_folds(&data.y, n_classes, k, cfg.seed);
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    let mut traces = Vec::with_capacity(k);

    for (f, test_rows) in folds.iter().enumerate() {
        let train_rows: Vec<usize> = (0..data.len())
            .filter(|i| test_rows.binary_search(i).is_err())
            .collect();
        let tx: Vec<Vec<f64>> = train_rows.iter().map(|&i| data.x[i].clone()).collect();
        let ty: Vec<usize> = train_rows.iter().map(|&i| data.y[i]).collect();
        let fold_seed = cfg.seed.wrapping_add(1 + f as u64);
        let balanced = smote(&tx, &ty, cfg.smote_k, fold_seed)?;
        let mut sources = BTreeSet::new();
        for o in &balanced.origin {
            if let Origin::Synthetic { base, neighbor } = *o {
                sources.insert(train_rows[base]);
                sources.insert(train_rows[neighbor]);
            }
        }
        let svm_cfg = SvmConfig {
            seed: fold_seed,
            ..cfg.svm.clone()
        };
        let model = train_classifier(&balanced.x, &balanced.y, n_classes, &svm_cfg)?;
        for &i in test_rows {
            confusion[data.y[i]][model.predict(&data.x[i])] += 1;
        }
        traces.push(FoldTrace {
            test_rows: test_rows.clone(),
            synthetic_sources: sources,
        });
    }

    let mut report = metrics_from_confusion(confusion, &data.classes);
    report.folds = traces;
    Ok(report)
}

/// Macro precision/recall/F1 (a class with no predictions has precision 0)
/// and pooled accuracy.
pub fn metrics_from_confusion(confusion: Vec<Vec<usize>>, classes: &[String]) -> ClassificationReport {
    let n = confusion.len();
    let total: usize = confusion.iter().flatten().sum();
    let correct: usize = (0..n).map(|c| confusion[c][c]).sum();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let per_class: Vec<ClassMetrics> = (0..n)
        .map(|c| {
            let tp = confusion[c][c];
            let support: usize = confusion[c].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                label: classes[c].clone(),
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let avg = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n as f64;
    ClassificationReport {
        precision: avg(|m| m.precision),
        recall: avg(|m| m.recall),
        f1: avg(|m| m.f1),
        accuracy: ratio(correct, total),
        per_class,
        confusion,
        folds: Vec::new(),
    }
}

impl ClassificationReport {
    /// CSV with per-class rows followed by the macro summary row.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = csv::Writer::from_path(path)?;
        out.write_record(["scope", "class", "precision", "recall", "f1", "accuracy", "support"])?;
        for m in &self.per_class {
            out.write_record([
                "class",
                &m.label,
                &format!("{:.6}", m.precision),
                &format!("{:.6}", m.recall),
                &format!("{:.6}", m.f1),
                "",
                &m.support.to_string(),
            ])?;
        }
        let total: usize = self.per_class.iter().map(|m| m.support).sum();
        out.write_record([
            "macro",
            "",
            &format!("{:.6}", self.precision),
            &format!("{:.6}", self.recall),
            &format!("{:.6}", self.f1),
            &format!("{:.6}", self.accuracy),
            &total.to_string(),
        ])?;
        out.flush()?;
        Ok(())
    }

    pub fn table(&self) -> String {
        let mut s = Vec::new();
        writeln!(s, "{} folds, macro-averaged", self.folds.len()).ok();
        writeln!(s, "{:<28} {:>9} {:>9} {:>9} {:>8}", "class", "precision", "recall", "f1", "support").ok();
        for m in &self.per_class {
            writeln!(
                s,
                "{:<28} {:>9.3} {:>9.3} {:>9.3} {:>8}",
                m.label, m.precision, m.recall, m.f1, m.support
            )
            .ok();
        }
        writeln!(
            s,
            "{:<28} {:>9.3} {:>9.3} {:>9.3}\naccuracy {:.1}%",
            "macro",
            self.precision,
            self.recall,
            self.f1,
            100.0 * self.accuracy
        )
        .ok();
        String::from_utf8(s).unwrap_or_default()
    }
}

//! Run configuration: defaults, a flat `key = value` config file, and
//! command-line overrides (flags win over the file).
//!
//! Config file keys are the long flag names with `-` replaced by `_`, e.g.
//!
//! ```text
//! prices = "data/prices.csv"
//! meta = "data/meta.csv"
//! out = "results"
//! seed = 7
//! epochs = 20
//! use_iqr = true
//! graph_threshold = 0.7
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use assetvec::classify::{ClassifyConfig, SvmConfig};
use assetvec::hedge::SignificanceConfig;
use assetvec::TrainConfig;
use clap::Args;
use serde::Deserialize;

macro_rules! overrides {
    ($( $(#[$doc:meta])* $field:ident : $ty:ty ),* $(,)?) => {
        /// Every run setting, each optional. Used both for the config file and
        /// for global command-line flags.
        #[derive(Debug, Clone, Default, Deserialize, Args)]
        #[serde(deny_unknown_fields)]
        pub struct Overrides {
            $( $(#[$doc])* #[arg(long, global = true)] pub $field: Option<$ty>, )*
        }

        impl Overrides {
            /// Fields set in `other` replace those in `self`.
            pub fn merge(self, other: Overrides) -> Overrides {
                Overrides { $( $field: other.$field.or(self.$field), )* }
            }
        }
    };
}

overrides! {
    /// Price file, CSV `date,ticker,close`
    prices: PathBuf,
    /// Metadata file, CSV `ticker,sector,industry`
    meta: PathBuf,
    /// Output directory
    out: PathBuf,
    /// Embedding file to read (defaults to <out>/embeddings.csv)
    embeddings: PathBuf,
    /// Master random seed
    seed: u64,
    /// Context assets per training set
    context_size: usize,
    /// Embedding dimension
    dim: usize,
    learning_rate: f64,
    epochs: usize,
    /// Drop sets whose target moved inside the daily interquartile range
    use_iqr: bool,
    /// Weight context rows by co-occurrence rate
    use_weighting: bool,
    /// Shuffle training sets every epoch
    shuffle: bool,
    /// Fraction of periods used for training in the hedging experiment
    train_fraction: f64,
    knn_k: usize,
    graph_threshold: f64,
    mismatch_threshold: f64,
    /// Hedge candidates per query in the robustness rerun
    pool: usize,
    /// Robustness reruns
    runs: usize,
    /// Significance level
    alpha: f64,
    /// Permutation-test resamples
    resamples: usize,
    /// Cross-validation folds
    folds: usize,
    smote_k: usize,
    svm_epochs: usize,
    svm_learning_rate: f64,
    svm_reg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub prices: Option<PathBuf>,
    pub meta: Option<PathBuf>,
    pub out: PathBuf,
    pub embeddings: Option<PathBuf>,
    pub seed: u64,
    pub train: TrainConfig,
    pub train_fraction: f64,
    pub knn_k: usize,
    pub graph_threshold: f64,
    pub mismatch_threshold: f64,
    pub pool: usize,
    pub runs: usize,
    pub alpha: f64,
    pub resamples: usize,
    pub classify: ClassifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            prices: None,
            meta: None,
            out: PathBuf::from("out"),
            embeddings: None,
            seed: 42,
            train: TrainConfig {
                use_iqr: true,
                use_weighting: true,
                ..TrainConfig::default()
            },
            train_fraction: 0.7,
            knn_k: 3,
            graph_threshold: 0.7,
            mismatch_threshold: 0.9,
            pool: 25,
            runs: 100,
            alpha: 0.01,
            resamples: 50_000,
            classify: ClassifyConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(config_file: Option<&Path>, flags: Overrides) -> Result<Self> {
        let file = match config_file {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str::<Overrides>(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => Overrides::default(),
        };
        let cfg = RunConfig::default().apply(file.merge(flags));
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(mut self, o: Overrides) -> Self {
        self.prices = o.prices.or(self.prices);
        self.meta = o.meta.or(self.meta);
        self.out = o.out.unwrap_or(self.out);
        self.embeddings = o.embeddings.or(self.embeddings);
        self.seed = o.seed.unwrap_or(self.seed);
        let t = &mut self.train;
        t.seed = self.seed;
        t.context_size = o.context_size.unwrap_or(t.context_size);
        t.dim = o.dim.unwrap_or(t.dim);
        t.learning_rate = o.learning_rate.unwrap_or(t.learning_rate);
        t.epochs = o.epochs.unwrap_or(t.epochs);
        t.use_iqr = o.use_iqr.unwrap_or(t.use_iqr);
        t.use_weighting = o.use_weighting.unwrap_or(t.use_weighting);
        t.shuffle = o.shuffle.unwrap_or(t.shuffle);
        self.train_fraction = o.train_fraction.unwrap_or(self.train_fraction);
        self.knn_k = o.knn_k.unwrap_or(self.knn_k);
        self.graph_threshold = o.graph_threshold.unwrap_or(self.graph_threshold);
        self.mismatch_threshold = o.mismatch_threshold.unwrap_or(self.mismatch_threshold);
        self.pool = o.pool.unwrap_or(self.pool);
        self.runs = o.runs.unwrap_or(self.runs);
        self.alpha = o.alpha.unwrap_or(self.alpha);
        self.resamples = o.resamples.unwrap_or(self.resamples);
        let c = &mut self.classify;
        c.seed = self.seed;
        c.folds = o.folds.unwrap_or(c.folds);
        c.smote_k = o.smote_k.unwrap_or(c.smote_k);
        c.svm = SvmConfig {
            epochs: o.svm_epochs.unwrap_or(c.svm.epochs),
            learning_rate: o.svm_learning_rate.unwrap_or(c.svm.learning_rate),
            reg: o.svm_reg.unwrap_or(c.svm.reg),
            seed: self.seed,
        };
        self
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.train;
        if t.epochs == 0 {
            bail!("epochs must be at least 1");
        }
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            bail!("learning_rate must be positive");
        }
        if t.dim == 0 || t.context_size == 0 {
            bail!("dim and context_size must be at least 1");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            bail!("train_fraction must lie in (0, 1)");
        }
        for (name, v) in [
            ("graph_threshold", self.graph_threshold),
            ("mismatch_threshold", self.mismatch_threshold),
        ] {
            if !(v > -1.0 && v < 1.0) {
                bail!("{name} must lie in (-1, 1)");
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!("alpha must lie in (0, 1)");
        }
        if self.knn_k == 0 || self.pool == 0 || self.runs == 0 || self.resamples == 0 {
            bail!("knn_k, pool, runs and resamples must be at least 1");
        }
        if self.classify.folds < 2 {
            bail!("folds must be at least 2");
        }
        if self.classify.smote_k == 0 || self.classify.svm.epochs == 0 {
            bail!("smote_k and svm_epochs must be at least 1");
        }
        if !(self.classify.svm.learning_rate > 0.0 && self.classify.svm.reg >= 0.0) {
            bail!("svm_learning_rate must be positive and svm_reg non-negative");
        }
        Ok(())
    }

    pub fn significance(&self) -> SignificanceConfig {
        SignificanceConfig {
            alpha: self.alpha,
            resamples: self.resamples,
            seed: self.seed,
        }
    }

    pub fn embeddings_path(&self) -> PathBuf {
        self.embeddings.clone().unwrap_or_else(|| self.out.join("embeddings.csv"))
    }

    pub fn input_paths(&self) -> Result<(&Path, &Path)> {
        match (&self.prices, &self.meta) {
            (Some(p), Some(m)) => Ok((p, m)),
            _ => bail!("both --prices and --meta are required (flag or config file)"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_experiment_settings() {
        let c = RunConfig::default();
        assert_eq!((c.train.context_size, c.train.dim), (3, 20));
        assert_eq!((c.knn_k, c.pool, c.runs, c.classify.folds), (3, 25, 100, 5));
        assert_eq!((c.train_fraction, c.graph_threshold, c.mismatch_threshold, c.alpha), (0.7, 0.7, 0.9, 0.01));
        c.validate().unwrap();
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "seed = 5\nepochs = 3\nuse_iqr = false\nout = \"res\"\n").unwrap();
        let flags = Overrides {
            epochs: Some(7),
            ..Overrides::default()
        };
        let c = RunConfig::load(Some(&p), flags).unwrap();
        assert_eq!(c.train.epochs, 7);
        assert_eq!(c.seed, 5);
        assert_eq!(c.train.seed, 5);
        assert!(!c.train.use_iqr);
        assert_eq!(c.out, PathBuf::from("res"));
    }

    #[test]
    fn unknown_key_and_bad_values_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "epoch = 3\n").unwrap();
        assert!(RunConfig::load(Some(&p), Overrides::default()).is_err());
        let zero = Overrides {
            epochs: Some(0),
            ..Overrides::default()
        };
        assert!(RunConfig::load(None, zero).is_err());
        let bad = Overrides {
            graph_threshold: Some(1.0),
            ..Overrides::default()
        };
        assert!(RunConfig::load(None, bad).is_err());
    }
}

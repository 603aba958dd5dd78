//! Dense embeddings of financial assets learned from daily returns.
//!
//! Assets whose same-day returns are close are treated like words sharing a
//! context: a CBOW-style softmax model with one shared weight matrix is
//! trained on target:context sets, and the learned rows are used for
//! nearest-neighbour retrieval, analogies, sector classification and hedge
//! selection.
//!
//! - [`data`]: price ingestion, simple returns, chronological split
//! - [`context`]: target:context sets, IQR filter, co-occurrence weights
//! - [`model`]: embedding matrix, forward pass, gradients, SGD trainer
//! - [`analysis`]: cosine, k-NN, analogies, similarity graph, baselines
//! - [`classify`]: SMOTE, linear SVM, stratified k-fold evaluation
//! - [`hedge`]: hedged portfolios, volatility, significance testing
//! - [`fixture`]: synthetic factor-model universes

pub mod analysis;
pub mod classify;
pub mod context;
pub mod data;
pub mod error;
pub mod fixture;
pub mod hedge;
pub mod model;
pub mod stats;

pub use analysis::{cosine, knn, pairwise_scores, Neighbor, ScoreMatrix, SimilarityMethod};
pub use context::{build_context_sets, cooccurrence, ContextSet, CooccurrenceMatrix};
pub use data::{compute_returns, date_split, load_prices, AssetMeta, PriceTable, ReturnsMatrix};
pub use error::{Error, Result};
pub use model::{train, EmbeddingMatrix, TrainConfig, TrainOutcome};

/// Builds context sets from `returns` per `cfg`, derives co-occurrence rates
/// when weighting is enabled, and trains.
pub fn fit_embeddings(cfg: &TrainConfig, returns: &ReturnsMatrix) -> Result<TrainOutcome> {
    cfg.validate(returns.n_assets())?;
    let sets = build_context_sets(returns, cfg.context_size, cfg.use_iqr)?;
    let beta = if cfg.use_weighting {
        Some(cooccurrence(&sets, returns.n_assets(), returns.len())?)
    } else {
        None
    };
    train(cfg, returns.n_assets(), &sets, beta.as_ref())
}

//! Subcommand pipelines. Each reads its inputs, writes CSVs into the output
//! directory and prints a short table to stdout.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use assetvec::analysis::{self, format_neighbors, Neighbor};
use assetvec::classify::{kfold_eval, LabeledVectors};
use assetvec::data::{date_split, find_ticker, load_prices};
use assetvec::fixture::FactorUniverse;
use assetvec::hedge::{self, HedgeMethod, SIGNIFICANCE_TEST_LABEL};
use assetvec::model::{load_embeddings, save_embeddings};
use assetvec::{compute_returns, fit_embeddings, AssetMeta, EmbeddingMatrix, ReturnsMatrix, SimilarityMethod};
use clap::Args;
use log::warn;

use crate::config::RunConfig;

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn load_returns(cfg: &RunConfig) -> Result<ReturnsMatrix> {
    let (prices, meta) = cfg.input_paths()?;
    let loaded = load_prices(prices, meta)?;
    if !loaded.dropped.is_empty() {
        println!("dropped {} assets with incomplete history: {}", loaded.dropped.len(), loaded.dropped.join(" "));
    }
    Ok(compute_returns(&loaded.table))
}

fn load_model(cfg: &RunConfig) -> Result<(EmbeddingMatrix, Vec<AssetMeta>)> {
    let path = cfg.embeddings_path();
    load_embeddings(&path).with_context(|| format!("loading embeddings {} (run `train` first)", path.display()))
}

pub fn ingest(cfg: &RunConfig) -> Result<ReturnsMatrix> {
    let r = load_returns(cfg)?;
    let mut out = create(&cfg.out.join("returns.csv"))?;
    write!(out, "date")?;
    for a in r.assets() {
        write!(out, ",{}", a.ticker)?;
    }
    writeln!(out)?;
    for (t, d) in r.dates().iter().enumerate() {
        write!(out, "{}", d.format("%Y-%m-%d"))?;
        for x in r.column(t) {
            write!(out, ",{x:.16e}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    let mut meta = csv::Writer::from_path(cfg.out.join("assets.csv"))?;
    meta.write_record(["index", "ticker", "sector", "industry"])?;
    for a in r.assets() {
        meta.write_record([&a.index.to_string(), &a.ticker, &a.sector, &a.industry])?;
    }
    meta.flush()?;
    let (first, last) = (r.dates().first(), r.dates().last());
    println!("assets   {}", r.n_assets());
    println!("periods  {}", r.len());
    if let (Some(f), Some(l)) = (first, last) {
        println!("range    {f} .. {l}");
    }
    Ok(r)
}

pub fn train(cfg: &RunConfig) -> Result<EmbeddingMatrix> {
    let r = load_returns(cfg)?;
    let outcome = fit_embeddings(&cfg.train, &r)?;
    save_embeddings(cfg.out.join("embeddings.csv"), &outcome.embeddings, r.assets())?;
    let mut out = create(&cfg.out.join("train_loss.csv"))?;
    writeln!(out, "epoch,mean_loss")?;
    for (e, l) in outcome.epoch_losses.iter().enumerate() {
        writeln!(out, "{},{l:.10}", e + 1)?;
    }
    out.flush()?;
    println!(
        "{}: {} assets, dim {}, context {}, {} epochs",
        cfg.train.variant_name(),
        r.n_assets(),
        cfg.train.dim,
        cfg.train.context_size,
        cfg.train.epochs
    );
    if let (Some(first), Some(last)) = (outcome.epoch_losses.first(), outcome.epoch_losses.last()) {
        println!("mean loss {first:.4} -> {last:.4}");
    }
    Ok(outcome.embeddings)
}

fn write_neighbors(
    out: &mut impl Write,
    query: &str,
    neighbors: &[Neighbor],
    assets: &[AssetMeta],
) -> Result<()> {
    for (rank, nb) in neighbors.iter().enumerate() {
        let a = &assets[nb.index];
        writeln!(out, "{query},{},{},{:.6}", rank + 1, a.ticker, nb.score)?;
    }
    Ok(())
}

pub fn knn(cfg: &RunConfig, ticker: Option<&str>, k: usize) -> Result<()> {
    let (w, assets) = load_model(cfg)?;
    let queries = match ticker {
        Some(t) => vec![find_ticker(&assets, t)?],
        None => (0..assets.len()).collect(),
    };
    let method = SimilarityMethod::EmbeddingCosine(&w);
    let mut out = create(&cfg.out.join("knn.csv"))?;
    writeln!(out, "query_ticker,rank,neighbor_ticker,similarity")?;
    for &q in &queries {
        let nbs = analysis::knn(&method, q, k)?;
        write_neighbors(&mut out, &assets[q].ticker, &nbs, &assets)?;
        if ticker.is_some() {
            println!("{} ({})", assets[q].ticker, assets[q].sector);
            print!("{}", format_neighbors(&nbs, &assets));
        }
    }
    out.flush()?;
    if ticker.is_none() {
        println!("wrote {k} neighbours for each of {} assets", queries.len());
    }
    Ok(())
}

pub fn analogy(cfg: &RunConfig, tickers: [&str; 3], k: usize) -> Result<()> {
    let (w, assets) = load_model(cfg)?;
    let [a, b, c] = tickers.map(|t| find_ticker(&assets, t));
    let (a, b, c) = (a?, b?, c?);
    let nbs = analysis::analogy(&w, a, b, c, k)?;
    let mut out = create(&cfg.out.join("analogy.csv"))?;
    writeln!(out, "a,b,c,rank,candidate_ticker,similarity")?;
    let prefix = format!("{},{},{}", assets[a].ticker, assets[b].ticker, assets[c].ticker);
    write_neighbors(&mut out, &prefix, &nbs, &assets)?;
    out.flush()?;
    println!("{} - {} + {}", assets[b].ticker, assets[a].ticker, assets[c].ticker);
    print!("{}", format_neighbors(&nbs, &assets));
    Ok(())
}

pub fn graph(cfg: &RunConfig) -> Result<()> {
    let (w, assets) = load_model(cfg)?;
    let edges = analysis::similarity_graph(&w, cfg.graph_threshold)?;
    analysis::write_edges(cfg.out.join("edges.csv"), &edges, &assets)?;
    let same = edges
        .iter()
        .filter(|e| assets[e.source].sector == assets[e.target].sector)
        .count();
    println!("threshold      {}", cfg.graph_threshold);
    println!("edges          {}", edges.len());
    println!("same-sector    {same}");
    Ok(())
}

pub fn mismatch(cfg: &RunConfig) -> Result<()> {
    let (w, assets) = load_model(cfg)?;
    let edges = analysis::mismatches(&w, &assets, cfg.mismatch_threshold)?;
    let mut out = csv::Writer::from_path(cfg.out.join("mismatches.csv"))?;
    out.write_record(["ticker_a", "sector_a", "ticker_b", "sector_b", "similarity"])?;
    for e in &edges {
        let (x, y) = (&assets[e.source], &assets[e.target]);
        out.write_record([&x.ticker, &x.sector, &y.ticker, &y.sector, &format!("{:.6}", e.score)])?;
    }
    out.flush()?;
    println!("{} cross-sector pairs above {}", edges.len(), cfg.mismatch_threshold);
    for e in edges.iter().take(10) {
        let (x, y) = (&assets[e.source], &assets[e.target]);
        println!(
            "{:<10} {:<24} {:<10} {:<24} {:.4}",
            x.ticker, x.sector, y.ticker, y.sector, e.score
        );
    }
    Ok(())
}

pub fn classify(cfg: &RunConfig) -> Result<()> {
    let (w, assets) = load_model(cfg)?;
    let data = LabeledVectors::from_embeddings(&w, &assets)?;
    let report = kfold_eval(&data, &cfg.classify)?;
    report.write_csv(cfg.out.join("classification.csv"))?;
    print!("{}", report.table());
    Ok(())
}

pub fn hedge(cfg: &RunConfig) -> Result<()> {
    let r = load_returns(cfg)?;
    let (train, test) = date_split(&r, cfg.train_fraction)?;
    let fitted = fit_embeddings(&cfg.train, &train)?;
    let w = fitted.embeddings;
    save_embeddings(cfg.out.join("hedge_embeddings.csv"), &w, train.assets())?;

    let embedding_name = cfg.train.variant_name();
    let methods = [
        HedgeMethod {
            name: embedding_name,
            similarity: SimilarityMethod::EmbeddingCosine(&w),
        },
        HedgeMethod {
            name: "Pearson",
            similarity: SimilarityMethod::Pearson(&train),
        },
        HedgeMethod {
            name: "Spearman",
            similarity: SimilarityMethod::Spearman(&train),
        },
        HedgeMethod {
            name: "Geometric (proxy)",
            similarity: SimilarityMethod::Geometric(&train),
        },
    ];
    let results = hedge::run_experiment(&methods, &test)?;
    let assets = test.assets();

    let mut out = csv::Writer::from_path(cfg.out.join("hedge_results.csv"))?;
    out.write_record(["method", "query_ticker", "hedge_ticker", "volatility"])?;
    for res in &results {
        for (q, (&h, v)) in res.hedges.iter().zip(&res.volatilities).enumerate() {
            out.write_record([&res.method, &assets[q].ticker, &assets[h].ticker, &format!("{v:.10}")])?;
        }
    }
    out.flush()?;

    let samples: Vec<(String, Vec<f64>)> = results
        .iter()
        .map(|r| (r.method.clone(), r.volatilities.clone()))
        .collect();
    let comparisons = hedge::significance_test(&samples, &cfg.significance())?;
    let mut out = csv::Writer::from_path(cfg.out.join("hedge_significance.csv"))?;
    out.write_record(["first", "second", "mean_difference", "p_value", "p_adjusted", "reject"])?;
    for c in &comparisons {
        out.write_record([
            &c.first,
            &c.second,
            &format!("{:.10}", c.mean_difference),
            &format!("{:.6}", c.p_value),
            &format!("{:.6}", c.p_adjusted),
            &c.reject.to_string(),
        ])?;
    }
    out.flush()?;

    let vs_pearson = |name: &str| {
        comparisons
            .iter()
            .find(|c| (c.first == name && c.second == "Pearson") || (c.second == name && c.first == "Pearson"))
    };
    let mut out = csv::Writer::from_path(cfg.out.join("hedge_summary.csv"))?;
    out.write_record(["method", "mean_volatility", "p_vs_pearson", "significant"])?;
    println!("annualized volatility of 50/50 daily-rebalanced pairs, test period {} periods", test.len());
    println!("{:<24} {:>16} {:>12} {:>12}", "method", "mean_volatility", "p_vs_pearson", "significant");
    for res in &results {
        let (p, sig) = match vs_pearson(&res.method) {
            Some(c) => (format!("{:.6}", c.p_adjusted), c.reject.to_string()),
            None => (String::new(), String::new()),
        };
        let mean = res.mean_volatility();
        out.write_record([&res.method, &format!("{mean:.10}"), &p, &sig])?;
        println!("{:<24} {:>16.6} {:>12} {:>12}", res.method, mean, p, sig);
    }
    out.flush()?;
    println!("test: {SIGNIFICANCE_TEST_LABEL}, alpha {}", cfg.alpha);

    for res in &results {
        hedge::write_histogram(cfg.out.join(histogram_name(&res.method)), &res.volatilities)?;
    }
    robustness(cfg, &methods, &test)?;
    Ok(())
}

/// File name for a method's histogram: lowercase, non-alphanumerics to `_`.
fn histogram_name(method: &str) -> PathBuf {
    let slug: String = method
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect::<String>()
        .split('_')
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("_");
    PathBuf::from(format!("hedge_histogram_{slug}.csv"))
}

fn robustness(cfg: &RunConfig, methods: &[HedgeMethod<'_>], test: &ReturnsMatrix) -> Result<()> {
    let n = test.n_assets();
    let mut pool = cfg.pool;
    if pool >= n {
        warn!("pool {pool} too large for {n} assets; using {}", n - 1);
        pool = n - 1;
    }
    let runs = hedge::robustness_rerun(methods, test, cfg.runs, pool, cfg.seed)?;
    let mut out = csv::Writer::from_path(cfg.out.join("hedge_robustness.csv"))?;
    out.write_record(["method", "run", "mean_volatility"])?;
    println!("robustness: {} runs, hedge drawn from the {pool} least similar", cfg.runs);
    for r in &runs {
        for (k, m) in r.run_means.iter().enumerate() {
            out.write_record([&r.method, &(k + 1).to_string(), &format!("{m:.10}")])?;
        }
        println!("{:<24} {:>16.6}", r.method, assetvec::stats::mean(&r.run_means));
    }
    out.flush()?;
    Ok(())
}

pub fn report(cfg: &RunConfig) -> Result<()> {
    println!("== ingest");
    ingest(cfg)?;
    println!("== train");
    train(cfg)?;
    let cfg = &RunConfig {
        embeddings: Some(cfg.out.join("embeddings.csv")),
        ..cfg.clone()
    };
    println!("== knn");
    knn(cfg, None, cfg.knn_k)?;
    println!("== graph");
    graph(cfg)?;
    println!("== mismatch");
    mismatch(cfg)?;
    println!("== classify");
    classify(cfg)?;
    println!("== hedge");
    hedge(cfg)
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long, default_value_t = 4)]
    pub sectors: usize,
    #[arg(long, default_value_t = 5)]
    pub per_sector: usize,
    #[arg(long, default_value_t = 500)]
    pub periods: usize,
    #[arg(long, default_value_t = 0.01)]
    pub factor_vol: f64,
    #[arg(long, default_value_t = 0.01)]
    pub noise_vol: f64,
    #[arg(long)]
    pub anti_pairs: bool,
    #[arg(long, default_value_t = 0)]
    pub shock_days: usize,
    #[arg(long, default_value_t = 1.0)]
    pub shock_span: f64,
    #[arg(long, default_value_t = 0.0)]
    pub shock_vol: f64,
}

/// Writes `prices.csv` and `meta.csv` into `--out` (default: current dir).
/// The default is the 20-asset, 4-sector smoke-test universe.
pub fn make_fixture(args: &FixtureArgs, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let u = FactorUniverse {
        sectors: args.sectors,
        per_sector: args.per_sector,
        periods: args.periods,
        factor_vol: args.factor_vol,
        noise_vol: args.noise_vol,
        anti_pairs: args.anti_pairs,
        shock_days: args.shock_days,
        shock_span: args.shock_span,
        shock_vol: args.shock_vol,
        seed: seed.unwrap_or(0),
    };
    let dir = out.unwrap_or(Path::new("."));
    u.write(dir)?;
    println!("wrote {} assets x {} periods to {}", u.n_assets(), u.periods, dir.display());
    Ok(())
}

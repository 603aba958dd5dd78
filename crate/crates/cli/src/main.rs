mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};

/// Asset embeddings from daily returns: training, retrieval, classification
/// and hedge selection.
#[derive(Debug, Parser)]
#[command(name = "assetvec", version)]
struct Cli {
    /// Flat `key = value` config file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load prices, write returns.csv and assets.csv
    Ingest,
    /// Train embeddings on the full history
    Train,
    /// Nearest neighbours by embedding cosine
    Knn {
        /// Query ticker; all assets when omitted
        #[arg(long)]
        ticker: Option<String>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Rank candidates for `b - a + c`
    Analogy {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long)]
        c: String,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Similarity graph edge list
    Graph,
    /// Highly similar pairs from different sectors
    Mismatch,
    /// Sector classification with k-fold cross-validation
    Classify,
    /// Hedge selection experiment on a chronological split
    Hedge,
    /// Full pipeline: ingest, train, knn, graph, mismatch, classify, hedge
    Report,
    /// Write a synthetic factor-model dataset (prices.csv, meta.csv)
    #[command(hide = true)]
    MakeFixture(commands::FixtureArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Command::MakeFixture(args) = &cli.command {
        return commands::make_fixture(args, cli.settings.seed, cli.settings.out.as_deref());
    }
    let cfg = RunConfig::load(cli.config.as_deref(), cli.settings)?;
    std::fs::create_dir_all(&cfg.out)?;
    match cli.command {
        Command::Ingest => commands::ingest(&cfg).map(|_| ()),
        Command::Train => commands::train(&cfg).map(|_| ()),
        Command::Knn { ticker, k } => commands::knn(&cfg, ticker.as_deref(), k.unwrap_or(cfg.knn_k)),
        Command::Analogy { a, b, c, k } => commands::analogy(&cfg, [&a, &b, &c], k.unwrap_or(cfg.knn_k)),
        Command::Graph => commands::graph(&cfg),
        Command::Mismatch => commands::mismatch(&cfg),
        Command::Classify => commands::classify(&cfg),
        Command::Hedge => commands::hedge(&cfg),
        Command::Report => commands::report(&cfg),
        Command::MakeFixture(_) => unreachable!("handled above"),
    }
}

//! Acceptance suite: one `[PASS]` / `[FAIL]` / `[SKIP]` line per criterion.
//! Runs without the libtest harness so the lines always reach stdout; the
//! process exits nonzero if any criterion fails.
//!
//! The optional real-data check reads `prices.csv` and `meta.csv` from the
//! directory named by `ASSETVEC_DATASET_DIR`.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use assetvec::classify::{kfold_eval, ClassifyConfig, LabeledVectors};
use assetvec::context::{weights_for_set, CooccurrenceMatrix};
use assetvec::fixture::{business_days, FactorUniverse};
use assetvec::hedge::{self, portfolio_volatility, HedgeMethod, HedgedPortfolio, SignificanceConfig, TRADING_DAYS};
use assetvec::model::{forward, hidden, loss_and_grads, softmax};
use assetvec::{
    build_context_sets, cooccurrence, date_split, fit_embeddings, knn, load_prices, train, AssetMeta, ContextSet,
    EmbeddingMatrix, ReturnsMatrix, SimilarityMethod, TrainConfig,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: Option<bool>,
    detail: String,
}

fn pass_if(ok: bool, detail: String) -> Outcome {
    Outcome { pass: Some(ok), detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_matrix(n: usize, dim: usize, scale: f64, g: &mut ChaCha8Rng) -> EmbeddingMatrix {
    let rows = (0..n)
        .map(|_| (0..dim).map(|_| g.random_range(-scale..scale)).collect())
        .collect();
    EmbeddingMatrix::from_rows(rows).unwrap()
}

fn random_returns(n: usize, t: usize, g: &mut ChaCha8Rng) -> ReturnsMatrix {
    let assets = (0..n)
        .map(|i| AssetMeta::new(i, format!("A{i}"), "S", "I"))
        .collect();
    let rows = (0..n)
        .map(|_| (0..t).map(|_| g.random_range(-0.05..0.05)).collect())
        .collect();
    ReturnsMatrix::new(assets, business_days(t), rows).unwrap()
}

fn neg_log_prob(w: &EmbeddingMatrix, set: &ContextSet, weights: &[f64]) -> f64 {
    -forward(w, &hidden(w, set, Some(weights)))[set.target].ln()
}

fn gradient_check() -> Outcome {
    let (n, dim, c, step) = (10, 5, 2, 1e-5);
    let mut g = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let w = random_matrix(n, dim, 1.0, &mut g);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut g);
        let set = ContextSet::new(idx[0], 0, idx[1..=c].to_vec()).unwrap();
        let a: f64 = g.random_range(0.05..0.95);
        let weights = [a, 1.0 - a];
        let analytic = loss_and_grads(&w, &set, Some(&weights)).1.dense();
        let mut rows = w.to_rows();
        for k in 0..n {
            for d in 0..dim {
                let orig = rows[k][d];
                rows[k][d] = orig + step;
                let up = neg_log_prob(&EmbeddingMatrix::from_rows(rows.clone()).unwrap(), &set, &weights);
                rows[k][d] = orig - step;
                let down = neg_log_prob(&EmbeddingMatrix::from_rows(rows.clone()).unwrap(), &set, &weights);
                rows[k][d] = orig;
                let fd = (up - down) / (2.0 * step);
                let rel = (fd - analytic[k][d]).abs() / fd.abs().max(analytic[k][d].abs()).max(1e-8);
                worst = worst.max(rel);
            }
        }
    }
    pass_if(worst < 1e-4, format!("max relative error {worst:.2e} over 100 instances"))
}

fn type7(xs: &[f64], p: f64) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = p * (s.len() - 1) as f64;
    let k = (pos as usize).min(s.len() - 2);
    s[k] + (pos - k as f64) * (s[k + 1] - s[k])
}

fn context_oracle() -> Outcome {
    let r = random_returns(50, 100, &mut rng(2));
    let mut checked = 0;
    for c in [1, 3, 5] {
        for iqr in [false, true] {
            let mut expected = Vec::new();
            for t in 0..r.len() {
                let col = r.column(t);
                let (q1, q3) = (type7(&col, 0.25), type7(&col, 0.75));
                for i in 0..50 {
                    if iqr && !(col[i] < q1 || col[i] > q3) {
                        continue;
                    }
                    let mut others: Vec<usize> = (0..50).filter(|&j| j != i).collect();
                    others.sort_by(|&a, &b| {
                        (col[a] - col[i])
                            .abs()
                            .partial_cmp(&(col[b] - col[i]).abs())
                            .unwrap()
                            .then(a.cmp(&b))
                    });
                    others.truncate(c);
                    expected.push((t, i, others));
                }
            }
            let got: Vec<_> = build_context_sets(&r, c, iqr)
                .unwrap()
                .into_iter()
                .map(|s| (s.time, s.target, s.context))
                .collect();
            if got != expected {
                return pass_if(false, format!("mismatch at C={c}, iqr={iqr}"));
            }
            checked += got.len();
        }
    }
    pass_if(true, format!("{checked} sets identical across C in {{1,3,5}} x IQR on/off"))
}

fn probabilistic_sanity() -> Outcome {
    let mut g = rng(3);
    let (mut worst_sum, mut worst_shift) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let n = g.random_range(2..40);
        let dim = g.random_range(1..16);
        let w = random_matrix(n, dim, 3.0, &mut g);
        let h: Vec<f64> = (0..dim).map(|_| g.random_range(-3.0..3.0)).collect();
        let p = forward(&w, &h);
        worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
        let z: Vec<f64> = (0..n).map(|k| w.row(k).iter().zip(&h).map(|(a, b)| a * b).sum()).collect();
        let c: f64 = g.random_range(-50.0..50.0);
        let shifted: Vec<f64> = z.iter().map(|x| x + c).collect();
        for (a, b) in softmax(&z).iter().zip(softmax(&shifted)) {
            worst_shift = worst_shift.max((a - b).abs());
        }
    }
    pass_if(
        worst_sum <= 1e-9 && worst_shift <= 1e-12,
        format!("max |sum - 1| {worst_sum:.1e}, max shift deviation {worst_shift:.1e}"),
    )
}

fn weighting_consistency() -> Outcome {
    let u = FactorUniverse {
        sectors: 4,
        per_sector: 5,
        periods: 120,
        ..FactorUniverse::default()
    };
    let r = u.returns().unwrap();
    let sets = build_context_sets(&r, 3, true).unwrap();
    let beta = cooccurrence(&sets, r.n_assets(), r.len()).unwrap();
    let scaled = beta.scaled(7.3);
    let (mut worst_sum, mut worst_scale) = (0.0f64, 0.0f64);
    for s in &sets {
        let w = weights_for_set(&beta, s);
        worst_sum = worst_sum.max((w.iter().sum::<f64>() - 1.0).abs());
        for (a, b) in w.iter().zip(weights_for_set(&scaled, s)) {
            worst_scale = worst_scale.max((a - b).abs());
        }
    }
    let cfg = TrainConfig {
        dim: 8,
        epochs: 3,
        ..TrainConfig::default()
    };
    let plain = train(&cfg, r.n_assets(), &sets, None).unwrap();
    let uniform = CooccurrenceMatrix::uniform(r.n_assets(), 0.37).unwrap();
    let weighted = train(
        &TrainConfig {
            use_weighting: true,
            ..cfg
        },
        r.n_assets(),
        &sets,
        Some(&uniform),
    )
    .unwrap();
    let exact = plain.embeddings == weighted.embeddings && plain.epoch_losses == weighted.epoch_losses;
    pass_if(
        worst_sum <= 1e-12 && worst_scale <= 1e-12 && exact,
        format!("max |sum - 1| {worst_sum:.1e}, max change under 7.3x {worst_scale:.1e}, uniform trajectory bit-exact: {exact}"),
    )
}

fn sector_labels(assets: &[AssetMeta]) -> Vec<&str> {
    assets.iter().map(|a| a.sector.as_str()).collect()
}

fn sector_fixture_embeddings() -> (EmbeddingMatrix, Vec<AssetMeta>, TrainConfig) {
    let u = FactorUniverse::default();
    let r = u.returns().unwrap();
    let cfg = TrainConfig {
        context_size: 3,
        dim: 10,
        epochs: 20,
        use_iqr: true,
        use_weighting: true,
        ..TrainConfig::default()
    };
    let w = fit_embeddings(&cfg, &r).unwrap().embeddings;
    (w, r.assets().to_vec(), cfg)
}

fn sector_recovery(w: &EmbeddingMatrix, assets: &[AssetMeta], cfg: &TrainConfig) -> Outcome {
    let labels = sector_labels(assets);
    let n = w.n_assets();
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0, 0.0, 0);
    for i in 0..n {
        for j in i + 1..n {
            let c = assetvec::cosine(w.row(i), w.row(j)).unwrap();
            if labels[i] == labels[j] {
                intra += c;
                n_intra += 1;
            } else {
                inter += c;
                n_inter += 1;
            }
        }
    }
    let gap = intra / n_intra as f64 - inter / n_inter as f64;
    let method = SimilarityMethod::EmbeddingCosine(w);
    let pure = (0..n)
        .filter(|&q| labels[knn(&method, q, 1).unwrap()[0].index] == labels[q])
        .count();
    let purity = pure as f64 / n as f64;
    pass_if(
        gap > 0.2 && purity >= 0.7,
        format!(
            "{}: intra - inter cosine {gap:.3}, 1-NN sector purity {:.1}%",
            cfg.variant_name(),
            100.0 * purity
        ),
    )
}

fn classification(w: &EmbeddingMatrix, assets: &[AssetMeta]) -> Outcome {
    let data = LabeledVectors::from_embeddings(w, assets).unwrap();
    let cfg = ClassifyConfig::default();
    let report = kfold_eval(&data, &cfg).unwrap();
    let mut labels: Vec<String> = assets.iter().map(|a| a.sector.clone()).collect();
    labels.shuffle(&mut rng(6));
    let permuted = kfold_eval(&LabeledVectors::new(w.to_rows(), &labels).unwrap(), &cfg).unwrap();
    let leak_free = [&report, &permuted]
        .iter()
        .flat_map(|r| &r.folds)
        .all(|f| f.test_rows.iter().all(|i| !f.synthetic_sources.contains(i)));
    pass_if(
        report.accuracy >= 0.6 && permuted.accuracy <= 0.2 && leak_free,
        format!(
            "accuracy {:.1}%, permuted-label accuracy {:.1}%, no SMOTE leakage: {leak_free}",
            100.0 * report.accuracy,
            100.0 * permuted.accuracy
        ),
    )
}

fn hedging_direction() -> Outcome {
    let (mut lower, mut rejected) = (0, 0);
    let (mut emb_total, mut pearson_total) = (0.0, 0.0);
    let cfg = TrainConfig {
        context_size: 3,
        dim: 10,
        epochs: 20,
        use_iqr: true,
        use_weighting: false,
        ..TrainConfig::default()
    };
    for seed in 0..10 {
        let u = FactorUniverse {
            per_sector: 8,
            periods: 1000,
            anti_pairs: true,
            shock_days: 5,
            shock_vol: 0.2,
            shock_span: 0.7,
            seed,
            ..FactorUniverse::default()
        };
        let r = u.returns().unwrap();
        let (train_r, test_r) = date_split(&r, 0.7).unwrap();
        let w = fit_embeddings(&TrainConfig { seed, ..cfg.clone() }, &train_r).unwrap().embeddings;
        let methods = [
            HedgeMethod {
                name: cfg.variant_name(),
                similarity: SimilarityMethod::EmbeddingCosine(&w),
            },
            HedgeMethod {
                name: "Pearson",
                similarity: SimilarityMethod::Pearson(&train_r),
            },
        ];
        let res = hedge::run_experiment(&methods, &test_r).unwrap();
        let (e, p) = (res[0].mean_volatility(), res[1].mean_volatility());
        emb_total += e;
        pearson_total += p;
        if e <= p {
            lower += 1;
        }
        let samples: Vec<(String, Vec<f64>)> = res.iter().map(|h| (h.method.clone(), h.volatilities.clone())).collect();
        let sig = hedge::significance_test(
            &samples,
            &SignificanceConfig {
                alpha: 0.05,
                seed,
                ..SignificanceConfig::default()
            },
        )
        .unwrap();
        if sig[0].reject {
            rejected += 1;
        }
    }
    pass_if(
        lower == 10 && rejected >= 8,
        format!(
            "{}: lower than Pearson in {lower}/10, mean {:.4} vs {:.4}; equality rejected in {rejected}/10 at alpha 0.05",
            cfg.variant_name(),
            emb_total / 10.0,
            pearson_total / 10.0
        ),
    )
}

fn variance_identity() -> Outcome {
    let mut g = rng(8);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let t = g.random_range(3..120);
        let r = random_returns(2, t, &mut g);
        let r = ReturnsMatrix::new(
            r.assets().to_vec(),
            r.dates().to_vec(),
            r.rows().iter().map(|row| row.iter().map(|x| x * 10.0).collect()).collect(),
        )
        .unwrap();
        let vol = portfolio_volatility(&r, HedgedPortfolio::new(0, 1).unwrap()).unwrap();
        let lhs = vol * vol / TRADING_DAYS;
        let (a, b) = (r.row(0), r.row(1));
        let n = t as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let var = |x: &[f64], m: f64| x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
        let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0);
        let rhs = 0.25 * (var(a, ma) + var(b, mb) + 2.0 * cov);
        worst = worst.max((lhs - rhs).abs());
    }
    pass_if(worst <= 1e-10, format!("max deviation {worst:.1e} over 1000 pairs"))
}

fn calibration() -> Outcome {
    let mut g = rng(9);
    let trials = 500;
    let resamples = 5000;
    let mut rejections = 0;
    for _ in 0..trials {
        let a: Vec<f64> = (0..40).map(|_| g.random_range(0.1..0.3)).collect();
        let b: Vec<f64> = (0..40).map(|_| g.random_range(0.1..0.3)).collect();
        if hedge::permutation_p_value(&a, &b, resamples, &mut g) < 0.01 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / trials as f64;
    pass_if(
        (0.002..=0.03).contains(&rate),
        format!("null rejection rate {rate:.3} over {trials} trials ({resamples} resamples each)"),
    )
}

fn dataset_check() -> Outcome {
    let Ok(dir) = std::env::var("ASSETVEC_DATASET_DIR") else {
        return Outcome {
            pass: None,
            detail: "ASSETVEC_DATASET_DIR not set".into(),
        };
    };
    let dir = Path::new(&dir);
    let loaded = match load_prices(dir.join("prices.csv"), dir.join("meta.csv")) {
        Ok(l) => l,
        Err(e) => return pass_if(false, format!("loading dataset: {e}")),
    };
    let r = assetvec::compute_returns(&loaded.table);
    let full = TrainConfig {
        use_iqr: true,
        use_weighting: true,
        ..TrainConfig::default()
    };
    let w = fit_embeddings(&full, &r).unwrap().embeddings;
    let data = LabeledVectors::from_embeddings(&w, r.assets()).unwrap();
    let acc = kfold_eval(&data, &ClassifyConfig::default()).unwrap().accuracy;

    let (train_r, test_r) = date_split(&r, 0.7).unwrap();
    let iqr = TrainConfig {
        use_iqr: true,
        ..TrainConfig::default()
    };
    let wh = fit_embeddings(&iqr, &train_r).unwrap().embeddings;
    let methods = [
        HedgeMethod {
            name: "Embedding+IQR",
            similarity: SimilarityMethod::EmbeddingCosine(&wh),
        },
        HedgeMethod {
            name: "Pearson",
            similarity: SimilarityMethod::Pearson(&train_r),
        },
    ];
    let res = hedge::run_experiment(&methods, &test_r).unwrap();
    let (e, p) = (res[0].mean_volatility(), res[1].mean_volatility());

    let bank = r.assets().iter().position(|a| a.ticker == "JPM");
    let finance = bank.map(|q| {
        knn(&SimilarityMethod::EmbeddingCosine(&w), q, 3)
            .unwrap()
            .iter()
            .filter(|n| r.assets()[n.index].sector == r.assets()[q].sector)
            .count()
    });
    let bank_ok = finance.is_none_or(|f| f >= 2);
    pass_if(
        (0.5..=0.7).contains(&acc) && e < p && bank_ok,
        format!(
            "accuracy {:.1}%, Embedding+IQR {e:.4} vs Pearson {p:.4}, JPM same-sector neighbours {}",
            100.0 * acc,
            finance.map_or("n/a".to_string(), |f| format!("{f}/3"))
        ),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_assetvec"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).trim().to_string())
    }
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let data = root.join("data");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    if let Err(e) = run_cli(&["make-fixture", "--out", &s(&data), "--seed", "11"]) {
        return pass_if(false, format!("make-fixture failed: {e}"));
    }
    let mut dirs = Vec::new();
    for k in 0..2 {
        let out = root.join(format!("run{k}"));
        let prices = s(&data.join("prices.csv"));
        let meta = s(&data.join("meta.csv"));
        if let Err(e) = run_cli(&["report", "--prices", &prices, "--meta", &meta, "--out", &s(&out), "--seed", "5"]) {
            return pass_if(false, format!("report failed: {e}"));
        }
        dirs.push(out);
    }
    let mut names: Vec<_> = std::fs::read_dir(&dirs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    let mut other: Vec<_> = std::fs::read_dir(&dirs[1])
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    other.sort();
    if names != other {
        return pass_if(false, "runs produced different file sets".into());
    }
    for name in &names {
        if std::fs::read(dirs[0].join(name)).unwrap() != std::fs::read(dirs[1].join(name)).unwrap() {
            return pass_if(false, format!("{} differs", name.to_string_lossy()));
        }
    }
    pass_if(true, format!("{} output files byte-identical across two runs", names.len()))
}

fn main() {
    let mut failed = 0;
    let mut report = |id: &str, title: &str, limit: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let mut o = f();
        let took = start.elapsed();
        if let (Some(limit), Some(true)) = (limit, o.pass) {
            if took > limit {
                o.pass = Some(false);
                o.detail.push_str(&format!("; exceeded {}s budget", limit.as_secs()));
            }
        }
        let tag = match o.pass {
            Some(true) => "PASS",
            Some(false) => {
                failed += 1;
                "FAIL"
            }
            None => "SKIP",
        };
        println!("[{tag}] {id} {title}: {} ({:.1}s)", o.detail, took.as_secs_f64());
    };
    let secs = |s| Some(Duration::from_secs(s));

    report("AC1", "gradient correctness", secs(10), &mut gradient_check);
    report("AC2", "context-set oracle", secs(5), &mut context_oracle);
    report("AC3", "probabilistic sanity", None, &mut probabilistic_sanity);
    report("AC4", "weighting consistency", None, &mut weighting_consistency);
    let start = Instant::now();
    let (w, assets, cfg) = sector_fixture_embeddings();
    let train_time = start.elapsed();
    report("AC5", "synthetic sector recovery", secs(120), &mut || {
        let mut o = sector_recovery(&w, &assets, &cfg);
        o.detail.push_str(&format!("; training {:.1}s", train_time.as_secs_f64()));
        if train_time > Duration::from_secs(120) {
            o.pass = Some(false);
        }
        o
    });
    report("AC6", "classification pipeline", None, &mut || classification(&w, &assets));
    report("AC7", "hedging direction", secs(300), &mut hedging_direction);
    report("AC8", "variance identity", None, &mut variance_identity);
    report("AC9", "significance-test calibration", None, &mut calibration);
    report("AC10", "public dataset (optional)", None, &mut dataset_check);
    report("AC11", "determinism", None, &mut determinism);

    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

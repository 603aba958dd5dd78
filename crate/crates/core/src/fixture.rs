//! Synthetic sector factor-model universes for tests, demos and the CLI's
//! `make-fixture` command.
//!
//! Daily returns are `loading * f_sector(t) + e_i(t)`, with Gaussian sector
//! factors and Gaussian idiosyncratic noise. Optionally, sector `2k + 1` is
//! driven by the negated factor of sector `2k`, producing anti-correlated
//! sector pairs, and a handful of stress days can be added on which every
//! asset takes a large independent shock (a fat-tailed estimation window).

use std::io::Write;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{compute_returns, AssetMeta, PriceTable, ReturnsMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FactorUniverse {
    pub sectors: usize,
    pub per_sector: usize,
    /// Number of return periods; prices have one more date.
    pub periods: usize,
    pub factor_vol: f64,
    pub noise_vol: f64,
    /// Pair sector `2k + 1` with the negated factor of sector `2k`.
    pub anti_pairs: bool,
    /// Number of stress days, placed uniformly at random within the first
    /// `shock_span` fraction of the periods.
    pub shock_days: usize,
    pub shock_span: f64,
    /// Standard deviation of the independent per-asset shock on a stress day.
    pub shock_vol: f64,
    pub seed: u64,
}

impl Default for FactorUniverse {
    fn default() -> Self {
        FactorUniverse {
            sectors: 8,
            per_sector: 8,
            periods: 500,
            factor_vol: 0.01,
            noise_vol: 0.01,
            anti_pairs: false,
            shock_days: 0,
            shock_span: 1.0,
            shock_vol: 0.0,
            seed: 0,
        }
    }
}

pub const SECTOR_NAMES: [&str; 11] = [
    "Basic Industries",
    "Capital Goods",
    "Consumer Durables",
    "Consumer Non-Durables",
    "Consumer Services",
    "Energy",
    "Finance",
    "Health Care",
    "Public Utilities",
    "Technology",
    "Transportation",
];

impl FactorUniverse {
    pub fn n_assets(&self) -> usize {
        self.sectors * self.per_sector
    }

    pub fn sector_of(&self, asset: usize) -> usize {
        asset / self.per_sector
    }

    fn sector_name(&self, s: usize) -> String {
        match SECTOR_NAMES.get(s) {
            Some(name) if self.sectors <= SECTOR_NAMES.len() => name.to_string(),
            _ => format!("Sector {s}"),
        }
    }

    pub fn assets(&self) -> Vec<AssetMeta> {
        (0..self.n_assets())
            .map(|i| {
                let s = self.sector_of(i);
                AssetMeta::new(
                    i,
                    format!("S{s:02}A{:02}", i % self.per_sector),
                    self.sector_name(s),
                    format!("{} Industry {}", self.sector_name(s), i % 2),
                )
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.sectors == 0 || self.per_sector == 0 || self.periods == 0 {
            return Err(Error::argument("fixture dimensions must be positive"));
        }
        if !(self.factor_vol >= 0.0 && self.noise_vol >= 0.0 && self.shock_vol >= 0.0) {
            return Err(Error::argument("volatilities must be non-negative"));
        }
        if !(self.shock_span > 0.0 && self.shock_span <= 1.0) {
            return Err(Error::argument("shock span outside (0, 1]"));
        }
        if self.shock_days > self.shock_window() {
            return Err(Error::argument("more stress days than the shock window holds"));
        }
        Ok(())
    }

    fn shock_window(&self) -> usize {
        (self.shock_span * self.periods as f64).floor() as usize
    }

    /// Raw factor-model returns, one row per asset.
    pub fn return_rows(&self) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let std = Normal::new(0.0, 1.0).expect("unit normal");
        let mut factors = vec![vec![0.0; self.periods]; self.sectors];
        for row in factors.iter_mut() {
            for f in row.iter_mut() {
                *f = self.factor_vol * std.sample(&mut rng);
            }
        }
        if self.anti_pairs {
            for s in (1..self.sectors).step_by(2) {
                factors[s] = factors[s - 1].iter().map(|f| -f).collect();
            }
        }
        let stress = rand::seq::index::sample(&mut rng, self.shock_window(), self.shock_days).into_vec();
        let mut rows = vec![vec![0.0; self.periods]; self.n_assets()];
        for (i, row) in rows.iter_mut().enumerate() {
            let f = &factors[self.sector_of(i)];
            for (t, r) in row.iter_mut().enumerate() {
                *r = f[t] + self.noise_vol * std.sample(&mut rng);
            }
            for &t in &stress {
                row[t] += self.shock_vol * std.sample(&mut rng);
            }
            // keep prices positive
            row.iter_mut().for_each(|r| *r = r.max(-0.95));
        }
        Ok(rows)
    }

    pub fn prices(&self) -> Result<PriceTable> {
        let rows = self.return_rows()?;
        let prices = rows
            .iter()
            .map(|r| {
                let mut p = Vec::with_capacity(r.len() + 1);
                p.push(100.0);
                for x in r {
                    let last = *p.last().expect("non-empty");
                    p.push(last * (1.0 + x));
                }
                p
            })
            .collect();
        PriceTable::new(self.assets(), business_days(self.periods + 1), prices)
    }

    /// Returns recomputed from the generated prices.
    pub fn returns(&self) -> Result<ReturnsMatrix> {
        Ok(compute_returns(&self.prices()?))
    }

    /// Writes `prices.csv` and `meta.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let table = self.prices()?;
        let mut out = std::io::BufWriter::new(std::fs::File::create(dir.join("prices.csv"))?);
        writeln!(out, "date,ticker,close")?;
        for (t, d) in table.dates().iter().enumerate() {
            for a in table.assets() {
                writeln!(out, "{},{},{:.16e}", d.format("%Y-%m-%d"), a.ticker, table.prices(a.index)[t])?;
            }
        }
        out.flush()?;
        let mut meta = csv::Writer::from_path(dir.join("meta.csv"))?;
        meta.write_record(["ticker", "sector", "industry"])?;
        for a in table.assets() {
            meta.write_record([&a.ticker, &a.sector, &a.industry])?;
        }
        meta.flush()?;
        Ok(())
    }
}

/// Consecutive weekdays starting 2000-01-03.
pub fn business_days(n: usize) -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    out
}

//! Price ingestion, simple returns and chronological splitting.
//!
//! Two CSV inputs are understood:
//!
//! * prices, header `date,ticker,close`, one row per (date, ticker), rows in
//!   non-decreasing date order;
//! * metadata, header `ticker,sector,industry`.
//!
//! Assets are indexed in metadata-file order. An asset lacking a price on any
//! date of the loaded range is dropped as a whole so that the universe stays
//! fixed over time.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use chrono::NaiveDate;
use log::warn;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssetMeta {
    pub index: usize,
    pub ticker: String,
    pub sector: String,
    pub industry: String,
}

impl AssetMeta {
    pub fn new(
        index: usize,
        ticker: impl Into<String>,
        sector: impl Into<String>,
        industry: impl Into<String>,
    ) -> Self {
        AssetMeta {
            index,
            ticker: ticker.into(),
            sector: sector.into(),
            industry: industry.into(),
        }
    }
}

/// Checks index contiguity and ticker uniqueness.
pub fn validate_assets(assets: &[AssetMeta]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for (pos, a) in assets.iter().enumerate() {
        if a.index != pos {
            return Err(Error::validation(format!(
                "asset `{}` has index {} at position {pos}",
                a.ticker, a.index
            )));
        }
        if a.ticker.is_empty() {
            return Err(Error::validation(format!("empty ticker at index {pos}")));
        }
        if !seen.insert(a.ticker.as_str()) {
            return Err(Error::validation(format!("duplicate ticker `{}`", a.ticker)));
        }
    }
    Ok(())
}

/// Looks a ticker up in an asset list.
pub fn find_ticker(assets: &[AssetMeta], ticker: &str) -> Result<usize> {
    assets
        .iter()
        .position(|a| a.ticker == ticker)
        .ok_or_else(|| Error::UnknownTicker(ticker.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    assets: Vec<AssetMeta>,
    dates: Vec<NaiveDate>,
    prices: Vec<Vec<f64>>,
}

impl PriceTable {
    pub fn new(assets: Vec<AssetMeta>, dates: Vec<NaiveDate>, prices: Vec<Vec<f64>>) -> Result<Self> {
        validate_assets(&assets)?;
        if prices.len() != assets.len() {
            return Err(Error::validation(format!(
                "{} price rows for {} assets",
                prices.len(),
                assets.len()
            )));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation("dates are not strictly increasing"));
        }
        for (a, row) in assets.iter().zip(&prices) {
            if row.len() != dates.len() {
                return Err(Error::validation(format!(
                    "`{}` has {} prices for {} dates",
                    a.ticker,
                    row.len(),
                    dates.len()
                )));
            }
            if let Some(p) = row.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
                return Err(Error::validation(format!(
                    "`{}` has non-positive price {p}",
                    a.ticker
                )));
            }
        }
        Ok(PriceTable {
            assets,
            dates,
            prices,
        })
    }

    pub fn assets(&self) -> &[AssetMeta] {
        &self.assets
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self, asset: usize) -> &[f64] {
        &self.prices[asset]
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }
}

/// Simple returns, one row per asset. Column `t` is the move from `dates[t-1]`
/// to `dates[t]` of the originating price table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsMatrix {
    assets: Vec<AssetMeta>,
    dates: Vec<NaiveDate>,
    returns: Vec<Vec<f64>>,
}

impl ReturnsMatrix {
    pub fn new(assets: Vec<AssetMeta>, dates: Vec<NaiveDate>, returns: Vec<Vec<f64>>) -> Result<Self> {
        validate_assets(&assets)?;
        if returns.len() != assets.len() {
            return Err(Error::validation(format!(
                "{} return rows for {} assets",
                returns.len(),
                assets.len()
            )));
        }
        for (a, row) in assets.iter().zip(&returns) {
            if row.len() != dates.len() {
                return Err(Error::validation(format!(
                    "`{}` has {} returns for {} dates",
                    a.ticker,
                    row.len(),
                    dates.len()
                )));
            }
            if let Some(r) = row.iter().find(|r| !(r.is_finite() && **r > -1.0)) {
                return Err(Error::validation(format!("`{}` has return {r}", a.ticker)));
            }
        }
        Ok(ReturnsMatrix {
            assets,
            dates,
            returns,
        })
    }

    pub fn assets(&self) -> &[AssetMeta] {
        &self.assets
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    /// Number of return periods `T`.
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn row(&self, asset: usize) -> &[f64] {
        &self.returns[asset]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.returns
    }

    /// Cross-section of all asset returns at period `t`.
    pub fn column(&self, t: usize) -> Vec<f64> {
        self.returns.iter().map(|row| row[t]).collect()
    }

    fn slice(&self, range: std::ops::Range<usize>) -> ReturnsMatrix {
        ReturnsMatrix {
            assets: self.assets.clone(),
            dates: self.dates[range.clone()].to_vec(),
            returns: self.returns.iter().map(|r| r[range.clone()].to_vec()).collect(),
        }
    }
}

/// A price table together with the tickers removed for incomplete history.
#[derive(Debug, Clone)]
pub struct LoadedPrices {
    pub table: PriceTable,
    pub dropped: Vec<String>,
}

/// Loads the full date range of a price file.
pub fn load_prices(path: impl AsRef<Path>, meta_path: impl AsRef<Path>) -> Result<LoadedPrices> {
    load_prices_between(path, meta_path, None, None)
}

/// Loads prices restricted to `start..=end` (either bound optional).
pub fn load_prices_between(
    path: impl AsRef<Path>,
    meta_path: impl AsRef<Path>,
    start: Option<NaiveDate>,
    end: Option<NaiveDate>,
) -> Result<LoadedPrices> {
    let path = path.as_ref();
    let meta = read_metadata(meta_path.as_ref())?;

    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    check_header(path, reader.headers()?, &["date", "ticker", "close"])?;

    let mut observed: HashMap<String, BTreeMap<NaiveDate, f64>> = HashMap::new();
    let mut all_dates = BTreeSet::new();
    let mut last_date: Option<NaiveDate> = None;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if record.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, found {}", record.len())));
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| parse_err(format!("bad date `{}`: {e}", &record[0])))?;
        let ticker = record[1].to_string();
        let close: f64 = record[2]
            .parse()
            .map_err(|e| parse_err(format!("bad price `{}`: {e}", &record[2])))?;

        if let Some(prev) = last_date {
            if date < prev {
                return Err(Error::validation(format!(
                    "{}: line {line}: date {date} precedes {prev}",
                    path.display()
                )));
            }
        }
        last_date = Some(date);
        if !(close.is_finite() && close > 0.0) {
            return Err(Error::validation(format!(
                "{}: line {line}: price {close} for `{ticker}` is not positive",
                path.display()
            )));
        }
        if start.is_some_and(|s| date < s) || end.is_some_and(|e| date > e) {
            continue;
        }
        all_dates.insert(date);
        let series = observed.entry(ticker.clone()).or_default();
        if series.insert(date, close).is_some() {
            return Err(Error::validation(format!(
                "{}: line {line}: duplicate price for `{ticker}` on {date}",
                path.display()
            )));
        }
    }

    let dates: Vec<NaiveDate> = all_dates.into_iter().collect();
    let mut assets = Vec::new();
    let mut prices = Vec::new();
    let mut dropped = Vec::new();
    for (ticker, sector, industry) in meta {
        let series = match observed.remove(&ticker) {
            Some(s) => s,
            None => {
                warn!("`{ticker}` has metadata but no prices; dropped");
                dropped.push(ticker);
                continue;
            }
        };
        if series.len() != dates.len() {
            warn!(
                "`{ticker}` has {} of {} prices; dropped",
                series.len(),
                dates.len()
            );
            dropped.push(ticker);
            continue;
        }
        assets.push(AssetMeta::new(assets.len(), ticker, sector, industry));
        prices.push(series.into_values().collect());
    }
    let mut orphans: Vec<String> = observed.into_keys().collect();
    orphans.sort();
    for ticker in orphans {
        warn!("`{ticker}` has prices but no metadata; dropped");
        dropped.push(ticker);
    }

    Ok(LoadedPrices {
        table: PriceTable::new(assets, dates, prices)?,
        dropped,
    })
}

fn read_metadata(path: &Path) -> Result<Vec<(String, String, String)>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    check_header(path, reader.headers()?, &["ticker", "sector", "industry"])?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let ticker = record[0].to_string();
        if ticker.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "empty ticker".into(),
            });
        }
        if !seen.insert(ticker.clone()) {
            return Err(Error::validation(format!(
                "{}: line {line}: duplicate ticker `{ticker}`",
                path.display()
            )));
        }
        out.push((ticker, record[1].to_string(), record[2].to_string()));
    }
    Ok(out)
}

fn check_header(path: &Path, header: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    Ok(())
}

/// `r[t] = (p[t+1] - p[t]) / p[t]` for every asset.
pub fn compute_returns(prices: &PriceTable) -> ReturnsMatrix {
    let returns = prices
        .prices
        .iter()
        .map(|row| row.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect())
        .collect();
    ReturnsMatrix {
        assets: prices.assets.clone(),
        dates: prices.dates.iter().skip(1).copied().collect(),
        returns,
    }
}

/// Splits chronologically: the earliest `floor(fraction * T)` periods, then the rest.
pub fn date_split(returns: &ReturnsMatrix, train_fraction: f64) -> Result<(ReturnsMatrix, ReturnsMatrix)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::argument(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let t = returns.len();
    if t < 2 {
        return Err(Error::argument(format!("cannot split {t} periods")));
    }
    let cut = (train_fraction * t as f64).floor() as usize;
    if cut == 0 || cut == t {
        return Err(Error::argument(format!(
            "fraction {train_fraction} of {t} periods leaves an empty split"
        )));
    }
    Ok((returns.slice(0..cut), returns.slice(cut..t)))
}

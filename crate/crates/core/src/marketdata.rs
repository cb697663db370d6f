//! Market history: candles on a fixed period grid, ingestion, cleaning,
//! asset preselection, and the normalized price tensors the policy reads.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use tensorgrad::Tensor;

use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: i64 = 86_400;
/// Periods accepted by the exchange chart endpoint.
pub const SUPPORTED_PERIODS: [i64; 6] = [300, 900, 1800, 7200, 14400, 86400];
/// Number of price features per asset: close, high, low (in that order).
pub const FEATURES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candle {
    pub open_time: i64,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Candle {
    /// A zero-volume period with no price movement.
    pub fn flat(open_time: i64, price: f64) -> Self {
        Self { open_time, open: price, high: price, low: price, close: price, volume: 0.0 }
    }

    pub fn is_consistent(&self) -> bool {
        let prices = [self.open, self.high, self.low, self.close];
        prices.iter().all(|p| p.is_finite() && *p > 0.0)
            && self.low <= self.close
            && self.close <= self.high
            && self.volume >= 0.0
    }
}

/// One asset's candles on the grid `start + j * period_seconds`; `None` marks
/// a missing slot.
#[derive(Debug, Clone, PartialEq)]
pub struct CandleSeries {
    pub asset: String,
    pub period_seconds: i64,
    pub start: i64,
    slots: Vec<Option<Candle>>,
}

impl CandleSeries {
    pub fn new(asset: impl Into<String>, period_seconds: i64, start: i64, slots: Vec<Option<Candle>>) -> Result<Self> {
        if period_seconds <= 0 {
            return Err(Error::Config(format!("period {period_seconds} must be positive")));
        }
        for (j, c) in slots.iter().enumerate() {
            if let Some(c) = c {
                let expected = start + j as i64 * period_seconds;
                if c.open_time != expected {
                    return Err(Error::Data(format!(
                        "candle {j} opens at {}, grid expects {expected}",
                        c.open_time
                    )));
                }
            }
        }
        Ok(Self { asset: asset.into(), period_seconds, start, slots })
    }

    /// Place arbitrary candles onto the grid covering `[start, end)`; slots
    /// without a candle are missing, candles off the grid are rejected.
    pub fn from_candles(
        asset: impl Into<String>,
        period_seconds: i64,
        start: i64,
        end: i64,
        candles: impl IntoIterator<Item = Candle>,
    ) -> Result<Self> {
        let len = grid_len(start, end, period_seconds);
        let mut slots = vec![None; len];
        for c in candles {
            let offset = c.open_time - start;
            if offset < 0 || offset % period_seconds != 0 {
                return Err(Error::Data(format!("candle at {} is off the grid", c.open_time)));
            }
            let j = (offset / period_seconds) as usize;
            if j < len {
                slots[j] = Some(c);
            }
        }
        Self::new(asset, period_seconds, start, slots)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn timestamp(&self, j: usize) -> i64 {
        self.start + j as i64 * self.period_seconds
    }

    /// One past the last slot's open time.
    pub fn end(&self) -> i64 {
        self.timestamp(self.len())
    }

    pub fn slots(&self) -> &[Option<Candle>] {
        &self.slots
    }

    pub fn get(&self, j: usize) -> Option<&Candle> {
        self.slots.get(j).and_then(Option::as_ref)
    }

    pub fn is_missing(&self, j: usize) -> bool {
        self.slots[j].is_none()
    }

    pub fn missing_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_none()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.missing_count() == 0
    }

    /// Slot index of `timestamp`, if it lies on this series' grid.
    pub fn index_of(&self, timestamp: i64) -> Option<usize> {
        let offset = timestamp - self.start;
        if offset < 0 || offset % self.period_seconds != 0 {
            return None;
        }
        let j = (offset / self.period_seconds) as usize;
        (j < self.len()).then_some(j)
    }

    /// Sub-series covering `[start, end)` of this grid.
    pub fn slice(&self, start: i64, end: i64) -> Result<Self> {
        let a = self
            .index_of(start)
            .ok_or_else(|| Error::Data(format!("{}: {start} not on the series grid", self.asset)))?;
        let len = grid_len(start, end, self.period_seconds);
        if a + len > self.len() {
            return Err(Error::Data(format!("{}: range ends after {}", self.asset, self.end())));
        }
        Ok(Self {
            asset: self.asset.clone(),
            period_seconds: self.period_seconds,
            start,
            slots: self.slots[a..a + len].to_vec(),
        })
    }
}

/// Number of grid slots in `[start, end)`.
pub fn grid_len(start: i64, end: i64, period: i64) -> usize {
    if end <= start {
        0
    } else {
        ((end - start + period - 1) / period) as usize
    }
}

/// First grid point at or after `t`.
pub fn align_up(t: i64, period: i64) -> i64 {
    t.div_euclid(period) * period + if t.rem_euclid(period) == 0 { 0 } else { period }
}

// ---------------------------------------------------------------------------
// Candle CSV

const CSV_HEADER: [&str; 7] = ["timestamp", "asset", "open", "high", "low", "close", "volume"];

/// Writes every slot of every series; missing slots become rows of NaN so the
/// file records which slots were requested.
pub fn write_candles_csv<'a, W: Write>(out: W, series: impl IntoIterator<Item = &'a CandleSeries>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(CSV_HEADER)?;
    for s in series {
        for (j, slot) in s.slots.iter().enumerate() {
            let ts = s.timestamp(j).to_string();
            match slot {
                Some(c) => wtr.write_record([
                    ts,
                    s.asset.clone(),
                    c.open.to_string(),
                    c.high.to_string(),
                    c.low.to_string(),
                    c.close.to_string(),
                    c.volume.to_string(),
                ])?,
                None => wtr.write_record([&ts, &s.asset, "NaN", "NaN", "NaN", "NaN", "NaN"])?,
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Rows grouped by asset. NaN rows come back as `None` at their timestamp.
pub fn read_candles_csv<R: Read>(input: R) -> Result<BTreeMap<String, Vec<(i64, Option<Candle>)>>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Parse {
            field: "header".into(),
            message: format!("expected {}", CSV_HEADER.join(",")),
        });
    }
    let mut out: BTreeMap<String, Vec<(i64, Option<Candle>)>> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| -> Result<f64> {
            rec[k].trim().parse::<f64>().map_err(|e| Error::Parse {
                field: CSV_HEADER[k].into(),
                message: format!("row {}: {e}", line + 1),
            })
        };
        let ts: i64 = rec[0].trim().parse().map_err(|e| Error::Parse {
            field: "timestamp".into(),
            message: format!("row {}: {e}", line + 1),
        })?;
        let (open, high, low, close, volume) = (field(2)?, field(3)?, field(4)?, field(5)?, field(6)?);
        let candle = if [open, high, low, close, volume].iter().any(|v| v.is_nan()) {
            None
        } else {
            Some(Candle { open_time: ts, open, high, low, close, volume })
        };
        out.entry(rec[1].trim().to_string()).or_default().push((ts, candle));
    }
    Ok(out)
}

/// Loads every asset in a candle CSV onto the grid `[start, end)`.
pub fn load_series_csv(path: &Path, period: i64, start: i64, end: i64) -> Result<BTreeMap<String, CandleSeries>> {
    let rows = read_candles_csv(std::fs::File::open(path)?)?;
    rows.into_iter()
        .map(|(asset, rows)| {
            let candles = rows
                .into_iter()
                .filter_map(|(_, c)| c)
                .filter(|c| c.open_time >= start && c.open_time < end);
            let s = CandleSeries::from_candles(asset.clone(), period, start, end, candles)?;
            Ok((asset, s))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// HTTP ingestion

/// Poloniex-style chart endpoint with a local per-(pair, period) cache.
#[derive(Debug, Clone)]
pub struct ChartClient {
    pub base_url: String,
    /// Appended to `base_url`; `{pair}`, `{start}`, `{end}`, `{period}` are substituted.
    pub query_template: String,
    pub attempts: u32,
    pub retry_delay: Duration,
    pub timeout: Duration,
    pub cache_dir: Option<PathBuf>,
}

pub const DEFAULT_QUERY_TEMPLATE: &str =
    "?command=returnChartData&currencyPair={pair}&start={start}&end={end}&period={period}";

impl ChartClient {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            query_template: DEFAULT_QUERY_TEMPLATE.into(),
            attempts: 3,
            retry_delay: Duration::from_millis(500),
            timeout: Duration::from_secs(30),
            cache_dir: None,
        }
    }

    pub fn with_cache(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    fn url(&self, pair: &str, period: i64, start: i64, end: i64) -> String {
        let q = self
            .query_template
            .replace("{pair}", pair)
            .replace("{start}", &start.to_string())
            .replace("{end}", &end.to_string())
            .replace("{period}", &period.to_string());
        format!("{}{}", self.base_url, q)
    }

    fn cache_path(&self, pair: &str, period: i64) -> Option<PathBuf> {
        self.cache_dir.as_ref().map(|d| d.join(format!("{pair}_{period}.csv")))
    }

    fn get_with_retry(&self, url: &str) -> Result<String> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let attempts = self.attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            match agent.get(url).call() {
                Ok(mut resp) => match resp.body_mut().read_to_string() {
                    Ok(body) => return Ok(body),
                    Err(e) => last = e.to_string(),
                },
                Err(e) => last = e.to_string(),
            }
            if attempt < attempts {
                std::thread::sleep(self.retry_delay * 2u32.saturating_pow(attempt - 1));
            }
        }
        Err(Error::Network { attempts, message: last })
    }

    /// Candles for `pair` on the grid covering `[start, end)`. Slots the
    /// server omits are flagged missing. Cached slots are served without a
    /// request when the cache covers the whole range.
    pub fn fetch_candles(&self, pair: &str, period_seconds: i64, start: i64, end: i64) -> Result<CandleSeries> {
        if !SUPPORTED_PERIODS.contains(&period_seconds) {
            return Err(Error::Config(format!("unsupported period {period_seconds}")));
        }
        if start >= end {
            return Err(Error::Config(format!("empty or inverted range [{start}, {end})")));
        }
        let first = align_up(start, period_seconds);
        let len = grid_len(first, end, period_seconds);
        if len == 0 {
            return CandleSeries::new(pair, period_seconds, first, Vec::new());
        }
        let mut cached: BTreeMap<i64, Option<Candle>> = BTreeMap::new();
        let cache_path = self.cache_path(pair, period_seconds);
        if let Some(p) = cache_path.as_ref().filter(|p| p.exists()) {
            for (_, rows) in read_candles_csv(std::fs::File::open(p)?)? {
                cached.extend(rows);
            }
        }
        let grid: Vec<i64> = (0..len).map(|j| first + j as i64 * period_seconds).collect();
        if !grid.iter().all(|t| cached.contains_key(t)) {
            let last = grid[len - 1];
            let body = self.get_with_retry(&self.url(pair, period_seconds, first, last))?;
            for c in parse_chart_json(&body)? {
                if c.open_time >= first && c.open_time <= last {
                    cached.insert(c.open_time, Some(c));
                }
            }
            for t in &grid {
                cached.entry(*t).or_insert(None);
            }
            if let Some(p) = &cache_path {
                let all_start = *cached.keys().next().expect("non-empty");
                let all_end = *cached.keys().last().expect("non-empty") + period_seconds;
                let slots = grid_slots(&cached, all_start, all_end, period_seconds);
                let whole = CandleSeries::new(pair, period_seconds, all_start, slots)?;
                if let Some(dir) = p.parent() {
                    std::fs::create_dir_all(dir)?;
                }
                let tmp = p.with_extension("csv.tmp");
                write_candles_csv(std::fs::File::create(&tmp)?, [&whole])?;
                std::fs::rename(tmp, p)?;
            }
        }
        CandleSeries::new(pair, period_seconds, first, grid.iter().map(|t| cached[t]).collect())
    }
}

fn grid_slots(map: &BTreeMap<i64, Option<Candle>>, start: i64, end: i64, period: i64) -> Vec<Option<Candle>> {
    (0..grid_len(start, end, period))
        .map(|j| map.get(&(start + j as i64 * period)).copied().flatten())
        .collect()
}

#[derive(Deserialize)]
struct ChartRow {
    date: Option<i64>,
    open: Option<f64>,
    high: Option<f64>,
    low: Option<f64>,
    close: Option<f64>,
    volume: Option<f64>,
}

/// Parses a chart-data JSON array. `volume` is quote-currency volume.
/// A single all-zero row with date 0 is the endpoint's empty-range answer.
pub fn parse_chart_json(body: &str) -> Result<Vec<Candle>> {
    let value: serde_json::Value = serde_json::from_str(body).map_err(|e| Error::Parse {
        field: "body".into(),
        message: e.to_string(),
    })?;
    if let Some(err) = value.get("error") {
        return Err(Error::Parse { field: "error".into(), message: err.to_string() });
    }
    let rows = value.as_array().ok_or_else(|| Error::Parse {
        field: "body".into(),
        message: "expected a JSON array".into(),
    })?;
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let r: ChartRow = serde_json::from_value(row.clone()).map_err(|e| Error::Parse {
            field: format!("[{i}]"),
            message: e.to_string(),
        })?;
        let need = |name: &str, v: Option<f64>| {
            v.filter(|x| x.is_finite()).ok_or_else(|| Error::Parse {
                field: format!("[{i}].{name}"),
                message: "missing or non-numeric".into(),
            })
        };
        let date = r.date.ok_or_else(|| Error::Parse {
            field: format!("[{i}].date"),
            message: "missing".into(),
        })?;
        if date == 0 {
            continue;
        }
        out.push(Candle {
            open_time: date,
            open: need("open", r.open)?,
            high: need("high", r.high)?,
            low: need("low", r.low)?,
            close: need("close", r.close)?,
            volume: need("volume", r.volume)?,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Cleaning and selection

/// The `m` assets with the greatest summed volume over
/// `[as_of - observation_days, as_of)`, volume descending then symbol
/// ascending. `as_of` must not be after `backtest_start`.
pub fn preselect_assets<'a>(
    all_series: impl IntoIterator<Item = &'a CandleSeries>,
    observation_days: i64,
    m: usize,
    as_of: i64,
    backtest_start: i64,
    cash: &str,
) -> Result<Vec<String>> {
    if as_of > backtest_start {
        return Err(Error::Config(format!(
            "volume observation ends at {as_of}, after the back-test start {backtest_start}"
        )));
    }
    let from = as_of - observation_days * SECONDS_PER_DAY;
    let mut ranked: Vec<(f64, &str)> = all_series
        .into_iter()
        .filter(|s| s.asset != cash)
        .map(|s| {
            let vol: f64 = s
                .slots
                .iter()
                .flatten()
                .filter(|c| c.open_time >= from && c.open_time < as_of)
                .map(|c| c.volume)
                .sum();
            (vol, s.asset.as_str())
        })
        .filter(|(v, _)| *v > 0.0)
        .collect();
    if ranked.len() < m {
        return Err(Error::Config(format!(
            "only {} assets traded in the observation window, {m} requested",
            ranked.len()
        )));
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    Ok(ranked.into_iter().take(m).map(|(_, s)| s.to_string()).collect())
}

/// Fill pre-listing slots flat at the first real close and interior gaps flat
/// at the previous close, all with zero volume.
pub fn fill_missing(series: &CandleSeries) -> Result<CandleSeries> {
    let first = series
        .slots
        .iter()
        .flatten()
        .next()
        .ok_or_else(|| Error::Data(format!("{}: every slot is missing", series.asset)))?;
    let mut price = first.close;
    let slots = series
        .slots
        .iter()
        .enumerate()
        .map(|(j, s)| match s {
            Some(c) => {
                price = c.close;
                Some(*c)
            }
            None => Some(Candle::flat(series.timestamp(j), price)),
        })
        .collect();
    CandleSeries::new(series.asset.clone(), series.period_seconds, series.start, slots)
}

/// Element-wise `v_now / v_prev`; entry 0 is cash and must be 1 in both.
pub fn price_relative(v_prev: &[f64], v_now: &[f64]) -> Result<Vec<f64>> {
    if v_prev.len() != v_now.len() || v_prev.is_empty() {
        return Err(Error::Domain(format!(
            "price vectors of length {} and {}",
            v_prev.len(),
            v_now.len()
        )));
    }
    if v_prev[0] != 1.0 || v_now[0] != 1.0 {
        return Err(Error::Domain("cash price must be 1".into()));
    }
    v_prev
        .iter()
        .zip(v_now)
        .enumerate()
        .map(|(i, (a, b))| {
            if !(*a > 0.0 && *b > 0.0) || !a.is_finite() || !b.is_finite() {
                Err(Error::Domain(format!("non-positive price at index {i}")))
            } else {
                Ok(b / a)
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Price tensors

/// Normalized window `(feature, asset, time)` ending at `as_of`, features
/// ordered close, high, low, every entry divided by the asset's latest close.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTensor {
    pub m: usize,
    pub n: usize,
    pub as_of: i64,
    values: Vec<f64>,
}

impl PriceTensor {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, feature: usize, asset: usize, lag: usize) -> f64 {
        self.values[(feature * self.m + asset) * self.n + lag]
    }

    pub fn shape(&self) -> [usize; 3] {
        [FEATURES, self.m, self.n]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(self.shape().to_vec(), self.values.clone())
    }
}

/// Filled, grid-aligned histories of the `m` selected assets.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPanel {
    pub assets: Vec<String>,
    pub period_seconds: i64,
    pub start: i64,
    /// `[feature][asset][period]`, features close, high, low.
    prices: [Vec<Vec<f64>>; FEATURES],
}

impl MarketPanel {
    /// Requires complete series sharing one grid.
    pub fn new(series: &[CandleSeries]) -> Result<Self> {
        let first = series.first().ok_or_else(|| Error::Data("no assets".into()))?;
        for s in series {
            if s.period_seconds != first.period_seconds || s.start != first.start || s.len() != first.len() {
                return Err(Error::Data(format!("{} is not on the same grid as {}", s.asset, first.asset)));
            }
            if let Some(j) = s.slots.iter().position(Option::is_none) {
                return Err(Error::Data(format!("{} has a gap at {}", s.asset, s.timestamp(j))));
            }
            if let Some(c) = s.slots.iter().flatten().find(|c| !c.is_consistent()) {
                return Err(Error::Data(format!("{}: inconsistent candle at {}", s.asset, c.open_time)));
            }
        }
        let pick = |f: fn(&Candle) -> f64| -> Vec<Vec<f64>> {
            series.iter().map(|s| s.slots.iter().flatten().map(f).collect()).collect()
        };
        Ok(Self {
            assets: series.iter().map(|s| s.asset.clone()).collect(),
            period_seconds: first.period_seconds,
            start: first.start,
            prices: [pick(|c| c.close), pick(|c| c.high), pick(|c| c.low)],
        })
    }

    /// Number of non-cash assets.
    pub fn m(&self) -> usize {
        self.assets.len()
    }

    /// Number of periods.
    pub fn len(&self) -> usize {
        self.prices[0].first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn timestamp(&self, d: usize) -> i64 {
        self.start + d as i64 * self.period_seconds
    }

    pub fn index_of(&self, timestamp: i64) -> Option<usize> {
        let offset = timestamp - self.start;
        if offset < 0 || offset % self.period_seconds != 0 {
            return None;
        }
        let d = (offset / self.period_seconds) as usize;
        (d < self.len()).then_some(d)
    }

    pub fn close(&self, asset: usize, d: usize) -> f64 {
        self.prices[0][asset][d]
    }

    /// Closing prices at `d` with cash prepended as 1.
    pub fn price_vector(&self, d: usize) -> Vec<f64> {
        std::iter::once(1.0).chain((0..self.m()).map(|i| self.close(i, d))).collect()
    }

    /// `y_d = v_d / v_{d-1}` with cash entry 1; `d >= 1`.
    pub fn relative(&self, d: usize) -> Vec<f64> {
        assert!(d >= 1 && d < self.len(), "relative vector needs 1 <= d < {}", self.len());
        std::iter::once(1.0)
            .chain((0..self.m()).map(|i| self.close(i, d) / self.close(i, d - 1)))
            .collect()
    }

    /// Price tensor over periods `d-n+1 ..= d`.
    pub fn price_tensor(&self, d: usize, n: usize) -> Result<PriceTensor> {
        if n == 0 || d >= self.len() {
            return Err(Error::Data(format!("period {d} outside panel of {} periods", self.len())));
        }
        if d + 1 < n {
            return Err(Error::InsufficientLookback {
                earliest: self.start,
                needed: self.timestamp(d) - (n as i64 - 1) * self.period_seconds,
            });
        }
        let m = self.m();
        let mut values = Vec::with_capacity(FEATURES * m * n);
        for feature in &self.prices {
            for (i, row) in feature.iter().enumerate() {
                let latest = self.prices[0][i][d];
                values.extend(row[d + 1 - n..=d].iter().map(|v| v / latest));
            }
        }
        Ok(PriceTensor { m, n, as_of: self.timestamp(d), values })
    }

    /// Panel restricted to periods `[from, to)`.
    pub fn window(&self, from: usize, to: usize) -> Self {
        let cut = |f: &Vec<Vec<f64>>| f.iter().map(|row| row[from..to].to_vec()).collect::<Vec<_>>();
        Self {
            assets: self.assets.clone(),
            period_seconds: self.period_seconds,
            start: self.timestamp(from),
            prices: [cut(&self.prices[0]), cut(&self.prices[1]), cut(&self.prices[2])],
        }
    }

    /// Same panel with asset rows reordered by `order` (new row `k` is old row `order[k]`).
    pub fn permuted(&self, order: &[usize]) -> Self {
        let perm = |f: &Vec<Vec<f64>>| order.iter().map(|&i| f[i].clone()).collect::<Vec<_>>();
        Self {
            assets: order.iter().map(|&i| self.assets[i].clone()).collect(),
            period_seconds: self.period_seconds,
            start: self.start,
            prices: [perm(&self.prices[0]), perm(&self.prices[1]), perm(&self.prices[2])],
        }
    }

    /// Back to per-asset series (all slots present).
    pub fn to_series(&self) -> Vec<CandleSeries> {
        (0..self.m())
            .map(|i| {
                let slots = (0..self.len())
                    .map(|d| {
                        Some(Candle {
                            open_time: self.timestamp(d),
                            open: if d == 0 { self.prices[0][i][0] } else { self.prices[0][i][d - 1] },
                            high: self.prices[1][i][d],
                            low: self.prices[2][i][d],
                            close: self.prices[0][i][d],
                            volume: 0.0,
                        })
                    })
                    .collect();
                CandleSeries { asset: self.assets[i].clone(), period_seconds: self.period_seconds, start: self.start, slots }
            })
            .collect()
    }
}

/// Price tensor at timestamp `t` from `m` filled series.
pub fn build_price_tensor(series_set: &[CandleSeries], t: i64, n: usize) -> Result<PriceTensor> {
    let panel = MarketPanel::new(series_set)?;
    let d = panel.index_of(t).ok_or_else(|| Error::Data(format!("{t} is not covered by the series")))?;
    panel.price_tensor(d, n)
}

// ---------------------------------------------------------------------------
// Synthetic markets

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticAsset {
    pub symbol: String,
    /// Expected log-growth rate of the mean price per period.
    pub drift: f64,
    pub volatility: f64,
    pub initial_price: f64,
}

impl SyntheticAsset {
    pub fn new(symbol: impl Into<String>, drift: f64, volatility: f64) -> Self {
        Self { symbol: symbol.into(), drift, volatility, initial_price: 1.0 }
    }
}

/// Geometric-Brownian closes `S_j = S_{j-1} exp(drift - vol^2/2 + vol z_j)`.
/// Each period opens at the previous close; highs and lows extend the
/// open/close range by half-normal noise of the same volatility. Asset `i`
/// draws from its own stream of the seeded generator.
pub fn generate_synthetic_market(
    assets: &[SyntheticAsset],
    periods: usize,
    seed: u64,
    period_seconds: i64,
    start: i64,
) -> Result<BTreeMap<String, CandleSeries>> {
    if periods == 0 {
        return Err(Error::Config("synthetic market needs at least one period".into()));
    }
    let mut out = BTreeMap::new();
    for (i, a) in assets.iter().enumerate() {
        if !a.drift.is_finite() || !(a.volatility >= 0.0) || !a.volatility.is_finite() || !(a.initial_price > 0.0) {
            return Err(Error::Config(format!("invalid synthetic asset {}", a.symbol)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let std = Normal::new(0.0, 1.0).expect("unit normal");
        let mut close = a.initial_price;
        let mut slots = Vec::with_capacity(periods);
        for j in 0..periods {
            let open = close;
            let z: f64 = std.sample(&mut rng);
            close = open * (a.drift - 0.5 * a.volatility * a.volatility + a.volatility * z).exp();
            let up = (a.volatility * std.sample(&mut rng)).abs().min(0.5);
            let down = (a.volatility * std.sample(&mut rng)).abs().min(0.5);
            let volume = 1000.0 * (0.5 * std.sample(&mut rng)).exp() * close;
            slots.push(Some(Candle {
                open_time: start + j as i64 * period_seconds,
                open,
                high: open.max(close) * (1.0 + up),
                low: open.min(close) * (1.0 - down),
                close,
                volume,
            }));
        }
        out.insert(a.symbol.clone(), CandleSeries::new(a.symbol.clone(), period_seconds, start, slots)?);
    }
    Ok(out)
}

//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored; unknown keys are errors. The
//! canonical rendering ([`RunConfig::to_text`]) lists every key in a fixed
//! order, so two configs are equal exactly when their renderings are.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::accounting::{CommissionSchedule, DEFAULT_FIXED_K, DEFAULT_TOLERANCE};
use crate::backtest::BacktestConfig;
use crate::error::{Error, Result};
use crate::marketdata::{
    fill_missing, generate_synthetic_market, grid_len, load_series_csv, preselect_assets, CandleSeries, ChartClient,
    MarketPanel, SyntheticAsset, SECONDS_PER_DAY, SUPPORTED_PERIODS,
};
use crate::policy::{Policy, PolicyTopology, TopologyKind};
use crate::training::{earliest_start, Trainer, TrainingConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Chart endpoint base URL.
    Http(String),
    /// A candle CSV file or a directory of them.
    Csv(PathBuf),
    Synthetic(Vec<SyntheticAsset>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_source: DataSource,
    pub query_template: String,
    pub fetch_attempts: u32,
    pub cash: String,
    pub trading_period: i64,
    /// Cash plus the preselected assets.
    pub number_of_assets: usize,
    pub volume_observation: i64,
    pub train_start: i64,
    pub train_end: i64,
    pub test_start: i64,
    pub test_end: i64,
    pub topology: TopologyKind,
    pub conv1_maps: usize,
    pub conv_width: usize,
    pub conv2_maps: usize,
    pub hidden_units: usize,
    pub batch_size: usize,
    pub window_size: usize,
    pub total_steps: u64,
    pub regularization_coefficient: f64,
    pub learning_rate: f64,
    pub sample_bias: f64,
    pub rolling_steps: usize,
    pub commission_rate: f64,
    pub fixed_k: usize,
    pub tolerance: f64,
    pub online_learning: bool,
    /// Whether UBAH, UCRP and Best Stock pay commission.
    pub benchmark_commission: bool,
    pub checkpoint_every: u64,
    /// Synthetic market generator.
    pub data_seed: u64,
    /// Parameter initialization.
    pub policy_seed: u64,
    /// Batch sampling.
    pub training_seed: u64,
    /// Asset symbols fetched as `{cash}_{symbol}` from an HTTP source.
    pub pairs: Vec<String>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainingConfig::default();
        let p = PolicyTopology::cnn(11, t.window_size);
        Self {
            data_source: DataSource::Synthetic(Vec::new()),
            query_template: crate::marketdata::DEFAULT_QUERY_TEMPLATE.to_string(),
            fetch_attempts: 3,
            cash: "BTC".into(),
            trading_period: 1800,
            number_of_assets: 12,
            volume_observation: 30,
            train_start: 0,
            train_end: 0,
            test_start: 0,
            test_end: 0,
            topology: TopologyKind::Cnn,
            conv1_maps: p.conv1_maps,
            conv_width: p.conv_width,
            conv2_maps: p.conv2_maps,
            hidden_units: p.hidden,
            batch_size: t.batch_size,
            window_size: t.window_size,
            total_steps: t.total_steps,
            regularization_coefficient: t.regularization_coefficient,
            learning_rate: t.learning_rate,
            sample_bias: t.sample_bias,
            rolling_steps: t.rolling_steps,
            commission_rate: t.fees.selling(),
            fixed_k: DEFAULT_FIXED_K,
            tolerance: DEFAULT_TOLERANCE,
            online_learning: true,
            benchmark_commission: true,
            checkpoint_every: 10_000,
            data_seed: 0,
            policy_seed: 1,
            training_seed: 2,
            pairs: Vec::new(),
            output_dir: PathBuf::from("run"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("`{key}`: cannot parse `{value}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected a boolean, got `{value}`"))),
    }
}

/// `SYMBOL:drift:volatility` entries separated by commas.
fn parse_synthetic(value: &str) -> Result<Vec<SyntheticAsset>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let parts: Vec<&str> = item.split(':').collect();
            if parts.len() != 3 {
                return Err(Error::Config(format!("synthetic asset `{item}` is not SYMBOL:drift:volatility")));
            }
            Ok(SyntheticAsset::new(
                parts[0],
                parse("synthetic", parts[1])?,
                parse("synthetic", parts[2])?,
            ))
        })
        .collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data_source" => {
                self.data_source = match value.split_once(':') {
                    Some(("csv", path)) => DataSource::Csv(PathBuf::from(path.trim())),
                    Some(("synthetic", spec)) => DataSource::Synthetic(parse_synthetic(spec)?),
                    _ if value.starts_with("http://") || value.starts_with("https://") => {
                        DataSource::Http(value.to_string())
                    }
                    _ => {
                        return Err(Error::Config(format!(
                            "data_source `{value}`: expected http(s)://…, csv:PATH, or synthetic:SPEC"
                        )))
                    }
                }
            }
            "query_template" => self.query_template = value.to_string(),
            "fetch_attempts" => self.fetch_attempts = parse(key, value)?,
            "cash" => self.cash = value.to_string(),
            "trading_period" => self.trading_period = parse(key, value)?,
            "number_of_assets" => self.number_of_assets = parse(key, value)?,
            "volume_observation" => self.volume_observation = parse(key, value)?,
            "train_start" => self.train_start = parse(key, value)?,
            "train_end" => self.train_end = parse(key, value)?,
            "test_start" => self.test_start = parse(key, value)?,
            "test_end" => self.test_end = parse(key, value)?,
            "topology" => self.topology = value.parse()?,
            "conv1_maps" => self.conv1_maps = parse(key, value)?,
            "conv_width" => self.conv_width = parse(key, value)?,
            "conv2_maps" => self.conv2_maps = parse(key, value)?,
            "hidden_units" => self.hidden_units = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "window_size" => self.window_size = parse(key, value)?,
            "total_steps" => self.total_steps = parse::<f64>(key, value).and_then(|v| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as u64)
                } else {
                    Err(Error::Config(format!("`{key}` must be a whole number, got `{value}`")))
                }
            })?,
            "regularization_coefficient" => self.regularization_coefficient = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "sample_bias" => self.sample_bias = parse(key, value)?,
            "rolling_steps" => self.rolling_steps = parse(key, value)?,
            "commission_rate" => self.commission_rate = parse(key, value)?,
            "fixed_k" => self.fixed_k = parse(key, value)?,
            "tolerance" => self.tolerance = parse(key, value)?,
            "online_learning" => self.online_learning = parse_bool(key, value)?,
            "benchmark_commission" => self.benchmark_commission = parse_bool(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "data_seed" => self.data_seed = parse(key, value)?,
            "policy_seed" => self.policy_seed = parse(key, value)?,
            "training_seed" => self.training_seed = parse(key, value)?,
            "pairs" => {
                self.pairs = value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
            }
            "output_dir" => self.output_dir = PathBuf::from(value),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Every key in canonical order.
    pub fn to_text(&self) -> String {
        let source = match &self.data_source {
            DataSource::Http(url) => url.clone(),
            DataSource::Csv(p) => format!("csv:{}", p.display()),
            DataSource::Synthetic(assets) => format!(
                "synthetic:{}",
                assets
                    .iter()
                    .map(|a| format!("{}:{}:{}", a.symbol, a.drift, a.volatility))
                    .collect::<Vec<_>>()
                    .join(",")
            ),
        };
        let pairs: Vec<(&str, String)> = vec![
            ("data_source", source),
            ("query_template", self.query_template.clone()),
            ("fetch_attempts", self.fetch_attempts.to_string()),
            ("cash", self.cash.clone()),
            ("trading_period", self.trading_period.to_string()),
            ("number_of_assets", self.number_of_assets.to_string()),
            ("volume_observation", self.volume_observation.to_string()),
            ("train_start", self.train_start.to_string()),
            ("train_end", self.train_end.to_string()),
            ("test_start", self.test_start.to_string()),
            ("test_end", self.test_end.to_string()),
            ("topology", self.topology.to_string()),
            ("conv1_maps", self.conv1_maps.to_string()),
            ("conv_width", self.conv_width.to_string()),
            ("conv2_maps", self.conv2_maps.to_string()),
            ("hidden_units", self.hidden_units.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("window_size", self.window_size.to_string()),
            ("total_steps", self.total_steps.to_string()),
            ("regularization_coefficient", self.regularization_coefficient.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("sample_bias", self.sample_bias.to_string()),
            ("rolling_steps", self.rolling_steps.to_string()),
            ("commission_rate", self.commission_rate.to_string()),
            ("fixed_k", self.fixed_k.to_string()),
            ("tolerance", self.tolerance.to_string()),
            ("online_learning", self.online_learning.to_string()),
            ("benchmark_commission", self.benchmark_commission.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("data_seed", self.data_seed.to_string()),
            ("policy_seed", self.policy_seed.to_string()),
            ("training_seed", self.training_seed.to_string()),
            ("pairs", self.pairs.join(",")),
            ("output_dir", self.output_dir.display().to_string()),
        ];
        pairs.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Non-cash asset count.
    pub fn m(&self) -> usize {
        self.number_of_assets.saturating_sub(1)
    }

    pub fn fees(&self) -> Result<CommissionSchedule> {
        CommissionSchedule::uniform(self.commission_rate)
    }

    pub fn topology(&self) -> PolicyTopology {
        PolicyTopology {
            kind: self.topology,
            m: self.m(),
            n: self.window_size,
            conv1_maps: self.conv1_maps,
            conv_width: self.conv_width,
            conv2_maps: self.conv2_maps,
            hidden: self.hidden_units,
        }
    }

    pub fn training(&self) -> Result<TrainingConfig> {
        let t = TrainingConfig {
            batch_size: self.batch_size,
            window_size: self.window_size,
            total_steps: self.total_steps,
            regularization_coefficient: self.regularization_coefficient,
            learning_rate: self.learning_rate,
            sample_bias: self.sample_bias,
            rolling_steps: self.rolling_steps,
            fees: self.fees()?,
            fixed_k: self.fixed_k,
        };
        t.validate()?;
        Ok(t)
    }

    fn periods(&self, from: i64, to: i64) -> usize {
        ((to - from) / self.trading_period) as usize
    }

    /// Checks every precondition that can be checked without data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !SUPPORTED_PERIODS.contains(&self.trading_period) {
            return bad(format!("trading_period {} not supported", self.trading_period));
        }
        if self.number_of_assets < 2 {
            return bad("number_of_assets counts cash and needs at least one other asset".into());
        }
        for (name, t) in [
            ("train_start", self.train_start),
            ("train_end", self.train_end),
            ("test_start", self.test_start),
            ("test_end", self.test_end),
        ] {
            if t.rem_euclid(self.trading_period) != 0 {
                return bad(format!("{name} = {t} is not on the {}-second grid", self.trading_period));
            }
        }
        if self.train_start >= self.train_end {
            return bad("training range is empty".into());
        }
        if self.test_start < self.train_end {
            return bad(format!(
                "test range starts at {}, inside the training range ending at {}",
                self.test_start, self.train_end
            ));
        }
        if self.test_start >= self.test_end {
            return bad("test range is empty".into());
        }
        if self.volume_observation <= 0 {
            return bad("volume_observation must be positive".into());
        }
        match &self.data_source {
            DataSource::Synthetic(assets) if assets.len() < self.m() => {
                return bad(format!("synthetic market has {} assets, {} requested", assets.len(), self.m()));
            }
            DataSource::Http(_) if self.pairs.len() < self.m() => {
                return bad(format!("{} pairs listed, {} assets requested", self.pairs.len(), self.m()));
            }
            _ => {}
        }
        self.topology().validate()?;
        let training = self.training()?;
        let train_periods = self.periods(self.train_start, self.train_end);
        if train_periods < training.batch_size + earliest_start(training.window_size) + 1 {
            return bad(format!(
                "{train_periods} training periods cannot hold a window of {} plus a batch of {}",
                training.window_size, training.batch_size
            ));
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive".into());
        }
        Ok(())
    }

    /// First timestamp the run reads: the training start or the start of
    /// the volume observation window, whichever is earlier.
    pub fn data_start(&self) -> i64 {
        self.train_start.min(self.test_start - self.volume_observation * SECONDS_PER_DAY)
    }

    /// Candles for every candidate asset on `[data_start, test_end)`.
    /// HTTP sources are cached under `cache_dir` when given.
    pub fn load_market(&self, cache_dir: Option<&Path>) -> Result<BTreeMap<String, CandleSeries>> {
        self.validate()?;
        let (start, end, period) = (self.data_start(), self.test_end, self.trading_period);
        match &self.data_source {
            DataSource::Synthetic(assets) => {
                generate_synthetic_market(assets, grid_len(start, end, period), self.data_seed, period, start)
            }
            DataSource::Csv(path) if path.is_dir() => {
                let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
                    .map(|e| e.map(|e| e.path()))
                    .collect::<std::io::Result<_>>()?;
                files.retain(|f| f.extension().is_some_and(|e| e == "csv"));
                files.sort();
                let mut out = BTreeMap::new();
                for f in files {
                    for (asset, series) in load_series_csv(&f, period, start, end)? {
                        if out.insert(asset.clone(), series).is_some() {
                            return Err(Error::Data(format!("asset {asset} appears in more than one file")));
                        }
                    }
                }
                Ok(out)
            }
            DataSource::Csv(path) => load_series_csv(path, period, start, end),
            DataSource::Http(url) => {
                let mut client = ChartClient::new(url.clone());
                client.query_template = self.query_template.clone();
                client.attempts = self.fetch_attempts;
                if let Some(dir) = cache_dir {
                    client = client.with_cache(dir);
                }
                let mut out = BTreeMap::new();
                for symbol in &self.pairs {
                    let mut series = client.fetch_candles(&format!("{}_{symbol}", self.cash), period, start, end)?;
                    series.asset = symbol.clone();
                    out.insert(symbol.clone(), series);
                }
                Ok(out)
            }
        }
    }

    /// Freshly initialized policy and trainer for a prepared panel.
    pub fn trainer(&self, data: &PreparedData) -> Result<Trainer> {
        let policy = Policy::initialized(self.topology(), self.policy_seed)?;
        Trainer::new(policy, self.training()?, data.panel.len(), self.training_seed)
    }

    /// Selects the assets, fills gaps, and lays the training and test ranges
    /// on one panel starting at `train_start`.
    pub fn prepare(&self, all: &BTreeMap<String, CandleSeries>) -> Result<PreparedData> {
        self.validate()?;
        let assets = preselect_assets(
            all.values(),
            self.volume_observation,
            self.m(),
            self.test_start,
            self.test_start,
            &self.cash,
        )?;
        let series = assets
            .iter()
            .map(|a| fill_missing(&all[a].slice(self.train_start, self.test_end)?))
            .collect::<Result<Vec<_>>>()?;
        let panel = MarketPanel::new(&series)?;
        let train_end = self.periods(self.train_start, self.train_end);
        let test_start = self.periods(self.train_start, self.test_start);
        let test_end = self.periods(self.train_start, self.test_end);
        Ok(PreparedData { panel, train_last: train_end - 1, test_start, test_end })
    }

    pub fn backtest(&self, data: &PreparedData) -> Result<BacktestConfig> {
        let mut b = BacktestConfig::new(data.test_start, data.test_end, self.fees()?);
        b.tolerance = self.tolerance;
        b.online_learning = self.online_learning;
        Ok(b)
    }

    /// Back-test settings for the benchmarks.
    pub fn benchmark(&self, data: &PreparedData) -> Result<BacktestConfig> {
        let mut b = self.backtest(data)?;
        if !self.benchmark_commission {
            b.fees = CommissionSchedule::zero();
        }
        Ok(b)
    }
}

/// Panel plus the range boundaries as panel indices.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub panel: MarketPanel,
    /// Last period whose prices training may see.
    pub train_last: usize,
    pub test_start: usize,
    /// One past the last test decision.
    pub test_end: usize,
}

//! Rolling back-tests of the policy and the benchmark strategies.
//!
//! Decisions happen at panel periods `start..end`. Before the first one the
//! portfolio is all cash. At decision `d` the holding `w_{d-1}` has drifted
//! through `y_d`; the strategy picks `w_d`, the move is charged via the
//! remainder factor, and the period's return is `ln(mu_d * y_d . w_{d-1})`.

use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::accounting::{
    fapv, max_drawdown, portfolio_value_path, sharpe_ratio, CommissionSchedule, PeriodLedgerEntry,
    PortfolioVector, SolveMode, DEFAULT_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::marketdata::MarketPanel;
use crate::training::{earliest_start, Trainer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    /// First decision period (panel index).
    pub start: usize,
    /// One past the last decision period.
    pub end: usize,
    pub fees: CommissionSchedule,
    pub tolerance: f64,
    pub online_learning: bool,
    pub initial_value: f64,
}

impl BacktestConfig {
    pub fn new(start: usize, end: usize, fees: CommissionSchedule) -> Self {
        Self { start, end, fees, tolerance: DEFAULT_TOLERANCE, online_learning: true, initial_value: 1.0 }
    }

    fn validate(&self, panel: &MarketPanel) -> Result<()> {
        if self.start < 1 || self.start >= self.end || self.end > panel.len() {
            return Err(Error::Config(format!(
                "test range {}..{} invalid for a panel of {} periods",
                self.start,
                self.end,
                panel.len()
            )));
        }
        if !(self.tolerance > 0.0) || !(self.initial_value > 0.0) {
            return Err(Error::Config("tolerance and initial value must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(json))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub fapv: f64,
    /// `None` when the return series has zero variance.
    pub sharpe: Option<f64>,
    pub mdd: f64,
}

impl Summary {
    pub fn from_records(initial_value: f64, records: &[PeriodLedgerEntry]) -> Self {
        let path = portfolio_value_path(initial_value, records);
        let rho: Vec<f64> = records.iter().map(|e| e.rho).collect();
        Self { fapv: fapv(&path), sharpe: sharpe_ratio(&rho).ok(), mdd: max_drawdown(&path) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub strategy: String,
    pub start: usize,
    pub end: usize,
    pub start_timestamp: i64,
    pub period_seconds: i64,
    pub initial_value: f64,
    pub config_hash: String,
    pub records: Vec<PeriodLedgerEntry>,
    pub path: Vec<f64>,
    pub summary: Summary,
}

impl BacktestReport {
    /// Non-cash turnover `Σ|w_d − w'_d|` averaged over decisions.
    pub fn mean_turnover(&self) -> f64 {
        let total: f64 = self
            .records
            .iter()
            .map(|e| crate::accounting::turnover(&e.w_target, &e.w_evolved))
            .sum();
        total / self.records.len() as f64
    }

    /// Mean weight on asset `i` (0 is cash) over all decisions.
    pub fn mean_weight(&self, i: usize) -> f64 {
        self.records.iter().map(|e| e.w_target.weights()[i]).sum::<f64>() / self.records.len() as f64
    }

    pub fn write_ledger_csv<W: Write>(&self, out: W) -> Result<()> {
        crate::accounting::write_ledger_csv(out, self.initial_value, &self.records)
    }

    /// Plot data `t,p_t`: the value before the first decision, then after each.
    pub fn write_plot_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["t", "p_t"])?;
        for (k, p) in self.path.iter().enumerate() {
            let t = self.start_timestamp + (k as i64 - 1) * self.period_seconds;
            wtr.write_record([t.to_string(), p.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// JSON with everything except the per-period records.
    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct View<'a> {
            strategy: &'a str,
            start: usize,
            end: usize,
            start_timestamp: i64,
            period_seconds: i64,
            periods: usize,
            initial_value: f64,
            final_value: f64,
            config_hash: &'a str,
            summary: Summary,
        }
        Ok(serde_json::to_string_pretty(&View {
            strategy: &self.strategy,
            start: self.start,
            end: self.end,
            start_timestamp: self.start_timestamp,
            period_seconds: self.period_seconds,
            periods: self.records.len(),
            initial_value: self.initial_value,
            final_value: *self.path.last().expect("path starts with the initial value"),
            config_hash: &self.config_hash,
            summary: self.summary,
        })?)
    }
}

/// Runs the decision loop with `decide(d, w_prev, w_evolved) -> w_d`.
pub fn simulate(
    strategy: &str,
    panel: &MarketPanel,
    config: &BacktestConfig,
    mut decide: impl FnMut(usize, &PortfolioVector, &PortfolioVector) -> Result<PortfolioVector>,
) -> Result<BacktestReport> {
    config.validate(panel)?;
    let m = panel.m();
    let mode = SolveMode::tolerance(config.tolerance);
    let mut w_prev = PortfolioVector::cash(m);
    let mut records = Vec::with_capacity(config.end - config.start);
    for d in config.start..config.end {
        let fault = |e: Error| match e {
            Error::Numerical { .. } => e,
            other => Error::Numerical { period: d, message: other.to_string() },
        };
        let y = panel.relative(d);
        let w_evolved = crate::accounting::evolve_weights(&w_prev, &y).map_err(fault)?;
        let w = decide(d, &w_prev, &w_evolved)?;
        let entry = PeriodLedgerEntry::record(d, y, &w_prev, w, &config.fees, mode).map_err(fault)?;
        w_prev = entry.w_target.clone();
        records.push(entry);
    }
    let path = portfolio_value_path(config.initial_value, &records);
    Ok(BacktestReport {
        strategy: strategy.to_string(),
        start: config.start,
        end: config.end,
        start_timestamp: panel.timestamp(config.start),
        period_seconds: panel.period_seconds,
        initial_value: config.initial_value,
        config_hash: config.hash(),
        summary: Summary::from_records(config.initial_value, &records),
        records,
        path,
    })
}

/// The policy trades from its own memory: each decision is written to the
/// slot it occupies and, with online learning on, followed by
/// `rolling_steps` training steps on data up to that period.
pub fn run_backtest(trainer: &mut Trainer, panel: &MarketPanel, config: &BacktestConfig) -> Result<BacktestReport> {
    let n = trainer.policy.topology.n;
    if config.start < earliest_start(n) {
        return Err(Error::Config(format!(
            "first decision {} precedes a full window of {n} periods",
            config.start
        )));
    }
    if trainer.memory.len() != panel.len() || trainer.policy.topology.m != panel.m() {
        return Err(Error::Config("trainer was built for a different panel".into()));
    }
    let strategy = format!("EIIE-{}", trainer.policy.topology.kind.to_string().to_uppercase());
    simulate(&strategy, panel, config, |d, w_prev, _| {
        let x = panel.price_tensor(d, n)?;
        let w = trainer.policy.act(&x, w_prev)?.weights;
        trainer.memory.write(d, w.clone())?;
        if config.online_learning {
            trainer.online_update(panel, d)?;
        }
        Ok(w)
    })
}

/// Equal split over cash and assets once, then hold.
pub fn benchmark_ubah(panel: &MarketPanel, config: &BacktestConfig) -> Result<BacktestReport> {
    let m = panel.m();
    simulate("UBAH", panel, config, |d, _, w_evolved| {
        Ok(if d == config.start { PortfolioVector::uniform(m) } else { w_evolved.clone() })
    })
}

/// Equal split over cash and assets every period.
pub fn benchmark_ucrp(panel: &MarketPanel, config: &BacktestConfig) -> Result<BacktestReport> {
    let m = panel.m();
    simulate("UCRP", panel, config, |_, _, _| Ok(PortfolioVector::uniform(m)))
}

/// Asset (1-based, as in portfolio vectors) with the largest close ratio over
/// the holding span; ties go to the smaller symbol.
pub fn best_stock_index(panel: &MarketPanel, start: usize, end: usize) -> usize {
    let last = end - 1;
    let mut best: Option<(f64, &str, usize)> = None;
    for i in 0..panel.m() {
        let ratio = panel.close(i, last) / panel.close(i, start);
        let symbol = panel.assets[i].as_str();
        let better = match best {
            None => true,
            Some((r, s, _)) => ratio > r || (ratio == r && symbol < s),
        };
        if better {
            best = Some((ratio, symbol, i + 1));
        }
    }
    best.expect("panel has assets").2
}

/// All-in on the asset that did best over the test range, chosen in hindsight.
pub fn benchmark_best_stock(panel: &MarketPanel, config: &BacktestConfig) -> Result<BacktestReport> {
    config.validate(panel)?;
    let m = panel.m();
    let pick = best_stock_index(panel, config.start, config.end);
    simulate("Best Stock", panel, config, |d, _, w_evolved| {
        Ok(if d == config.start { PortfolioVector::all_in(m, pick) } else { w_evolved.clone() })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub strategy: String,
    pub mdd: f64,
    pub fapv: f64,
    pub sharpe: Option<f64>,
    pub best_mdd: bool,
    pub best_fapv: bool,
    pub best_sharpe: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

/// Side-by-side MDD, fAPV, and Sharpe ratio, best per column flagged
/// (lowest MDD, highest fAPV, highest defined Sharpe ratio).
pub fn compare(reports: &[&BacktestReport]) -> Result<ComparisonTable> {
    let first = reports.first().ok_or_else(|| Error::Config("nothing to compare".into()))?;
    for r in reports {
        if (r.start, r.end, r.start_timestamp) != (first.start, first.end, first.start_timestamp) {
            return Err(Error::Config(format!(
                "{} covers {}..{}, {} covers {}..{}",
                r.strategy, r.start, r.end, first.strategy, first.start, first.end
            )));
        }
    }
    let argbest = |key: &dyn Fn(&BacktestReport) -> Option<f64>, lower: bool| -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, r) in reports.iter().enumerate() {
            if let Some(v) = key(r) {
                let better = match best {
                    None => true,
                    Some((_, b)) => if lower { v < b } else { v > b },
                };
                if better {
                    best = Some((i, v));
                }
            }
        }
        best.map(|b| b.0)
    };
    let mdd = argbest(&|r| Some(r.summary.mdd), true);
    let fapv = argbest(&|r| Some(r.summary.fapv), false);
    let sr = argbest(&|r| r.summary.sharpe, false);
    Ok(ComparisonTable {
        rows: reports
            .iter()
            .enumerate()
            .map(|(i, r)| ComparisonRow {
                strategy: r.strategy.clone(),
                mdd: r.summary.mdd,
                fapv: r.summary.fapv,
                sharpe: r.summary.sharpe,
                best_mdd: mdd == Some(i),
                best_fapv: fapv == Some(i),
                best_sharpe: sr == Some(i),
            })
            .collect(),
    })
}

fn render_sharpe(s: Option<f64>) -> String {
    s.map_or_else(|| "n/a".to_string(), |v| v.to_string())
}

impl ComparisonTable {
    /// `strategy,mdd,fapv,sr,best` where `best` lists the flagged columns.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["strategy", "mdd", "fapv", "sr", "best"])?;
        for r in &self.rows {
            let best: Vec<&str> = [(r.best_mdd, "mdd"), (r.best_fapv, "fapv"), (r.best_sharpe, "sr")]
                .iter()
                .filter(|(f, _)| *f)
                .map(|(_, n)| *n)
                .collect();
            wtr.write_record([
                r.strategy.clone(),
                r.mdd.to_string(),
                r.fapv.to_string(),
                render_sharpe(r.sharpe),
                best.join(";"),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Fixed-width table; `*` marks the best entry of each column.
    pub fn to_text(&self) -> String {
        let cell = |v: String, best: bool| if best { format!("{v}*") } else { format!("{v} ") };
        let rows: Vec<[String; 4]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.strategy.clone(),
                    cell(format!("{:.2}%", r.mdd * 100.0), r.best_mdd),
                    cell(format!("{:.4}", r.fapv), r.best_fapv),
                    cell(r.sharpe.map_or("n/a".into(), |s| format!("{s:.4}")), r.best_sharpe),
                ]
            })
            .collect();
        let header = ["Strategy".to_string(), "MDD".into(), "fAPV".into(), "SR".into()];
        let widths: Vec<usize> = (0..4)
            .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
            .collect();
        let line = |r: &[String; 4]| {
            let mut s = format!("{:<w$}", r[0], w = widths[0]);
            for c in 1..4 {
                s.push_str(&format!("  {:>w$}", r[c], w = widths[c]));
            }
            s.trim_end().to_string() + "\n"
        };
        let mut out = line(&header);
        for r in &rows {
            out.push_str(&line(r));
        }
        out
    }
}

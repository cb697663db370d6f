//! Portfolio arithmetic under proportional transaction costs.
//!
//! Index 0 of every weight or relative vector is the cash (quote) asset.
//! A period `t` runs: hold `w_{t-1}` while prices move by `y_t`, the weights
//! drift to `w'_t`, the agent rebalances to `w_t`, and commissions shrink the
//! portfolio value by the remainder factor `mu_t`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fees must stay below this for the remainder map to keep a positive floor.
pub const MAX_COMMISSION: f64 = 0.38;
pub const DEFAULT_FIXED_K: usize = 10;
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;
const SUM_TOLERANCE: f64 = 1e-12;

/// Non-negative weights over cash plus `m` assets, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PortfolioVector(Vec<f64>);

impl PortfolioVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidPortfolio("empty weight vector".into()));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidPortfolio(format!("weight {i} is {w}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidPortfolio(format!("weights sum to {sum}")));
        }
        Ok(Self(weights))
    }

    /// All capital in the quote currency.
    pub fn cash(m: usize) -> Self {
        let mut w = vec![0.0; m + 1];
        w[0] = 1.0;
        Self(w)
    }

    /// Equal split over cash and the `m` assets.
    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / (m + 1) as f64; m + 1])
    }

    /// All capital in asset `i` (0 is cash).
    pub fn all_in(m: usize, i: usize) -> Self {
        assert!(i <= m, "asset index {i} out of range for m = {m}");
        let mut w = vec![0.0; m + 1];
        w[i] = 1.0;
        Self(w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn non_cash(&self) -> &[f64] {
        &self.0[1..]
    }

    /// Number of non-cash assets.
    pub fn assets(&self) -> usize {
        self.0.len() - 1
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for PortfolioVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PortfolioVector> for Vec<f64> {
    fn from(p: PortfolioVector) -> Self {
        p.0
    }
}

/// Proportional commission rates for selling and purchasing non-cash assets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommissionSchedule {
    selling: f64,
    purchasing: f64,
}

impl CommissionSchedule {
    pub fn new(selling: f64, purchasing: f64) -> Result<Self> {
        for (name, c) in [("selling", selling), ("purchasing", purchasing)] {
            if !(0.0..MAX_COMMISSION).contains(&c) {
                return Err(Error::Config(format!(
                    "{name} commission {c} outside [0, {MAX_COMMISSION})"
                )));
            }
        }
        Ok(Self { selling, purchasing })
    }

    pub fn uniform(rate: f64) -> Result<Self> {
        Self::new(rate, rate)
    }

    pub fn zero() -> Self {
        Self { selling: 0.0, purchasing: 0.0 }
    }

    pub fn selling(&self) -> f64 {
        self.selling
    }

    pub fn purchasing(&self) -> f64 {
        self.purchasing
    }

    /// `c_s + c_p - c_s c_p`: the cost of selling one unit and buying with the proceeds.
    pub fn round_trip(&self) -> f64 {
        self.selling + self.purchasing - self.selling * self.purchasing
    }

    /// Rate used for the solver's starting point; equals both rates when they agree.
    pub fn mean_rate(&self) -> f64 {
        0.5 * (self.selling + self.purchasing)
    }

    pub fn is_zero(&self) -> bool {
        self.selling == 0.0 && self.purchasing == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SolveMode {
    FixedIterations(usize),
    Tolerance { delta: f64, max_iterations: usize },
}

impl SolveMode {
    pub fn tolerance(delta: f64) -> Self {
        SolveMode::Tolerance { delta, max_iterations: DEFAULT_MAX_ITERATIONS }
    }
}

impl Default for SolveMode {
    fn default() -> Self {
        SolveMode::tolerance(DEFAULT_TOLERANCE)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_relative(y: &[f64], m1: usize) -> Result<()> {
    if y.len() != m1 {
        return Err(Error::Domain(format!("relative vector has length {}, expected {m1}", y.len())));
    }
    if let Some((i, v)) = y.iter().enumerate().find(|(_, v)| !v.is_finite() || **v <= 0.0) {
        return Err(Error::Domain(format!("price relative {i} is {v}")));
    }
    Ok(())
}

/// Weights after prices move by `y` with no trading: `(y ⊙ w) / (y · w)`.
pub fn evolve_weights(w_prev: &PortfolioVector, y: &[f64]) -> Result<PortfolioVector> {
    check_relative(y, w_prev.len())?;
    let growth = dot(y, w_prev.weights());
    if !(growth > 0.0) {
        return Err(Error::Domain(format!("portfolio growth y·w = {growth}")));
    }
    Ok(PortfolioVector(
        y.iter().zip(w_prev.weights()).map(|(yi, wi)| yi * wi / growth).collect(),
    ))
}

/// The map `f` whose unique fixed point on `[0, 1]` is the remainder factor.
pub fn remainder_map(
    mu: f64,
    w_target: &PortfolioVector,
    w_evolved: &PortfolioVector,
    fees: &CommissionSchedule,
) -> f64 {
    let w = w_target.weights();
    let we = w_evolved.weights();
    let sold: f64 = we[1..].iter().zip(&w[1..]).map(|(a, b)| (a - mu * b).max(0.0)).sum();
    (1.0 - fees.purchasing * we[0] - fees.round_trip() * sold) / (1.0 - fees.purchasing * w[0])
}

/// Sum of absolute non-cash weight changes between two portfolios.
pub fn turnover(w_target: &PortfolioVector, w_evolved: &PortfolioVector) -> f64 {
    w_target.non_cash().iter().zip(w_evolved.non_cash()).map(|(a, b)| (a - b).abs()).sum()
}

/// Starting point `c · Σ_{i≥1} |w'_i − w_i|`, clamped to `[0, 1]`.
pub fn initial_guess(w_target: &PortfolioVector, w_evolved: &PortfolioVector, c: f64) -> f64 {
    (c * turnover(w_target, w_evolved)).clamp(0.0, 1.0)
}

/// Remainder factor by fixed-point iteration from [`initial_guess`] at the
/// mean commission rate. Returns `(mu, iterations)`; a portfolio that is
/// not traded returns exactly 1 after zero iterations.
pub fn solve_mu(
    w_target: &PortfolioVector,
    w_evolved: &PortfolioVector,
    fees: &CommissionSchedule,
    mode: SolveMode,
) -> Result<(f64, usize)> {
    if w_target == w_evolved {
        match mode {
            SolveMode::FixedIterations(0) => {}
            SolveMode::Tolerance { delta, .. } if !(delta > 0.0) => {}
            _ => return Ok((1.0, 0)),
        }
    }
    let start = initial_guess(w_target, w_evolved, fees.mean_rate());
    solve_mu_from(start, w_target, w_evolved, fees, mode)
}

/// Fixed-point iteration from an arbitrary start in `[0, 1]`.
pub fn solve_mu_from(
    start: f64,
    w_target: &PortfolioVector,
    w_evolved: &PortfolioVector,
    fees: &CommissionSchedule,
    mode: SolveMode,
) -> Result<(f64, usize)> {
    if w_target.len() != w_evolved.len() {
        return Err(Error::Domain(format!(
            "target has {} weights, evolved has {}",
            w_target.len(),
            w_evolved.len()
        )));
    }
    if !(0.0..=1.0).contains(&start) {
        return Err(Error::Domain(format!("starting value {start} outside [0, 1]")));
    }
    let mut mu = start;
    match mode {
        SolveMode::FixedIterations(k) => {
            if k == 0 {
                return Err(Error::Config("fixed iteration count must be at least 1".into()));
            }
            for _ in 0..k {
                mu = remainder_map(mu, w_target, w_evolved, fees);
            }
            Ok((mu, k))
        }
        SolveMode::Tolerance { delta, max_iterations } => {
            if !(delta > 0.0) {
                return Err(Error::Config(format!("tolerance must be positive, got {delta}")));
            }
            for j in 1..=max_iterations {
                let next = remainder_map(mu, w_target, w_evolved, fees);
                let step = (next - mu).abs();
                mu = next;
                if step < delta {
                    return Ok((mu, j));
                }
            }
            Err(Error::Convergence { iterations: max_iterations })
        }
    }
}

fn growth(y: &[f64], w_prev: &PortfolioVector, mu: f64) -> Result<f64> {
    check_relative(y, w_prev.len())?;
    let g = mu * dot(y, w_prev.weights());
    if !(g > 0.0) || !g.is_finite() {
        return Err(Error::Domain(format!("period growth factor {g}")));
    }
    Ok(g)
}

/// `ln(mu · (y · w_prev))`.
pub fn period_log_return(y: &[f64], w_prev: &PortfolioVector, mu: f64) -> Result<f64> {
    Ok(growth(y, w_prev, mu)?.ln())
}

/// `mu · (y · w_prev) − 1`.
pub fn period_rate(y: &[f64], w_prev: &PortfolioVector, mu: f64) -> Result<f64> {
    Ok(growth(y, w_prev, mu)? - 1.0)
}

/// One rebalancing period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodLedgerEntry {
    pub t: usize,
    pub y: Vec<f64>,
    pub w_target: PortfolioVector,
    pub w_evolved: PortfolioVector,
    pub mu: f64,
    pub log_return: f64,
    pub rho: f64,
}

impl PeriodLedgerEntry {
    /// Hold `w_prev` through a move of `y`, then rebalance to `w_target`.
    pub fn record(
        t: usize,
        y: Vec<f64>,
        w_prev: &PortfolioVector,
        w_target: PortfolioVector,
        fees: &CommissionSchedule,
        mode: SolveMode,
    ) -> Result<Self> {
        let w_evolved = evolve_weights(w_prev, &y)?;
        let (mu, _) = solve_mu(&w_target, &w_evolved, fees, mode)?;
        let log_return = period_log_return(&y, w_prev, mu)?;
        let rho = period_rate(&y, w_prev, mu)?;
        Ok(Self { t, y, w_target, w_evolved, mu, log_return, rho })
    }
}

/// `p0 · exp(cumulative log return)`, starting with `p0` itself.
pub fn value_path_from_log_returns(p0: f64, log_returns: &[f64]) -> Vec<f64> {
    let mut path = Vec::with_capacity(log_returns.len() + 1);
    path.push(p0);
    let mut acc = 0.0;
    for r in log_returns {
        acc += r;
        path.push(p0 * acc.exp());
    }
    path
}

pub fn portfolio_value_path(p0: f64, ledger: &[PeriodLedgerEntry]) -> Vec<f64> {
    let r: Vec<f64> = ledger.iter().map(|e| e.log_return).collect();
    value_path_from_log_returns(p0, &r)
}

/// Mean over population standard deviation, risk-free rate zero.
pub fn sharpe_ratio(period_returns: &[f64]) -> Result<f64> {
    if period_returns.len() < 2 {
        return Err(Error::UndefinedMetric("Sharpe ratio"));
    }
    let first = period_returns[0];
    if period_returns.iter().all(|r| *r == first) {
        return Err(Error::UndefinedMetric("Sharpe ratio"));
    }
    let n = period_returns.len() as f64;
    let mean = period_returns.iter().sum::<f64>() / n;
    let var = period_returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::UndefinedMetric("Sharpe ratio"));
    }
    Ok(mean / var.sqrt())
}

/// Largest peak-to-trough fractional loss.
pub fn max_drawdown(path: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0_f64;
    for &p in path {
        peak = peak.max(p);
        worst = worst.max((peak - p) / peak);
    }
    worst
}

/// Final over initial value.
pub fn fapv(path: &[f64]) -> f64 {
    match (path.first(), path.last()) {
        (Some(first), Some(last)) => last / first,
        _ => 1.0,
    }
}

/// Ledger CSV: `t,mu,log_return,rho,portfolio_value,w_0..w_m`.
pub fn write_ledger_csv<W: Write>(out: W, p0: f64, ledger: &[PeriodLedgerEntry]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let m1 = ledger.first().map_or(0, |e| e.w_target.len());
    let mut header: Vec<String> = ["t", "mu", "log_return", "rho", "portfolio_value"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..m1).map(|i| format!("w_{i}")));
    wtr.write_record(&header)?;
    let path = portfolio_value_path(p0, ledger);
    for (e, p) in ledger.iter().zip(&path[1..]) {
        let mut row = vec![
            e.t.to_string(),
            e.mu.to_string(),
            e.log_return.to_string(),
            e.rho.to_string(),
            p.to_string(),
        ];
        row.extend(e.w_target.weights().iter().map(f64::to_string));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

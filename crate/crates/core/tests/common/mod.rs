#![allow(dead_code)]

use eiie::accounting::{CommissionSchedule, PortfolioVector};
use eiie::marketdata::{generate_synthetic_market, MarketPanel, SyntheticAsset};
use rand::Rng;

/// Random simplex point on `m + 1` entries; roughly a third of the non-cash
/// entries are exactly zero.
pub fn random_portfolio<R: Rng>(m: usize, rng: &mut R) -> PortfolioVector {
    let mut raw: Vec<f64> = (0..=m)
        .map(|i| if i > 0 && rng.random_bool(0.3) { 0.0 } else { -rng.random::<f64>().max(1e-300).ln() })
        .collect();
    if raw.iter().all(|v| *v == 0.0) {
        raw[0] = 1.0;
    }
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let drift: f64 = 1.0 - w.iter().sum::<f64>();
    w[0] = (w[0] + drift).max(0.0);
    PortfolioVector::new(w).expect("simplex point")
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub w: PortfolioVector,
    pub w_evolved: PortfolioVector,
    pub cs: f64,
    pub cp: f64,
}

impl Instance {
    pub fn fees(&self) -> CommissionSchedule {
        CommissionSchedule::new(self.cs, self.cp).unwrap()
    }
}

pub fn random_instance<R: Rng>(rng: &mut R, max_rate: f64) -> Instance {
    let m = rng.random_range(1..=11);
    Instance {
        w: random_portfolio(m, rng),
        w_evolved: random_portfolio(m, rng),
        cs: rng.random_range(0.0..=max_rate),
        cp: rng.random_range(0.0..=max_rate),
    }
}

/// The remainder map written out term by term, independent of the library.
pub fn oracle_f(mu: f64, inst: &Instance) -> f64 {
    let w = inst.w.weights();
    let we = inst.w_evolved.weights();
    let mut sold = 0.0;
    for i in 1..w.len() {
        let excess = we[i] - mu * w[i];
        if excess > 0.0 {
            sold += excess;
        }
    }
    let rate = inst.cs + inst.cp - inst.cs * inst.cp;
    (1.0 - inst.cp * we[0] - rate * sold) / (1.0 - inst.cp * w[0])
}

/// Root of `f(mu) = mu` on `[0, 1]` by bisection down to adjacent floats.
pub fn bisection_oracle(inst: &Instance) -> f64 {
    let g = |mu: f64| oracle_f(mu, inst) - mu;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    if g(hi) >= 0.0 {
        return hi;
    }
    assert!(g(lo) > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Cash left over after selling down to `mu * w`, keeping `mu * w_0` in cash,
/// and buying up to `mu * w`, with every amount in units of the pre-trade value.
pub fn self_financing_residual(inst: &Instance, mu: f64) -> f64 {
    let w = inst.w.weights();
    let we = inst.w_evolved.weights();
    let mut cash = we[0];
    for i in 1..w.len() {
        let target = mu * w[i];
        if we[i] > target {
            cash += (1.0 - inst.cs) * (we[i] - target);
        }
    }
    let spendable = (1.0 - inst.cp) * (cash - mu * w[0]);
    let mut bought = 0.0;
    for i in 1..w.len() {
        let target = mu * w[i];
        if target > we[i] {
            bought += target - we[i];
        }
    }
    spendable - bought
}

pub fn market(assets: &[(&str, f64, f64)], periods: usize, seed: u64) -> MarketPanel {
    let spec: Vec<SyntheticAsset> = assets.iter().map(|(s, d, v)| SyntheticAsset::new(*s, *d, *v)).collect();
    let all = generate_synthetic_market(&spec, periods, seed, 1800, 0).unwrap();
    let series: Vec<_> = all.values().cloned().collect();
    MarketPanel::new(&series).unwrap()
}

/// Largest `(p_i - p_j) / p_i` over all `i <= j`.
pub fn exhaustive_drawdown(path: &[f64]) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..path.len() {
        for j in i..path.len() {
            worst = worst.max((path[i] - path[j]) / path[i]);
        }
    }
    worst
}

/// Mean over population standard deviation, in two passes.
pub fn two_pass_sharpe(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    mean / var.sqrt()
}

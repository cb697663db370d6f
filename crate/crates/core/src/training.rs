//! Deterministic policy-gradient training over a portfolio-vector memory
//! with online stochastic batch learning.
//!
//! Panel period `d` supplies the observation `X_d`, the relative `y_d`
//! (`d >= 1`), and memory slot `d`. A batch starting at `t_b` covers
//! decisions `tau = t_b .. t_b + n_b`. Each decision reads `w_{tau-1}` from
//! memory, acts, pays for the move from `w'_tau = evolve(w_{tau-1}, y_tau)`,
//! and is rewarded with `ln(mu_tau * y_{tau+1} . w_tau)`. The last relative
//! used is `y_{t_b + n_b}`, so a batch never reaches past `t_b + n_b`.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};
use tensorgrad::checkpoint::{self, Entry};
use tensorgrad::{adam_step, l2_penalty_node, AdamState, Graph, NodeId, ParameterSet, Tensor};

use crate::accounting::{evolve_weights, CommissionSchedule, PortfolioVector, DEFAULT_FIXED_K};
use crate::error::{Error, Result};
use crate::marketdata::{MarketPanel, FEATURES};
use crate::policy::{add_policy, batch_input, Policy, PolicyNodes, PolicyTopology};

/// Chronological store of one portfolio vector per panel period.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioVectorMemory {
    m: usize,
    slots: Vec<PortfolioVector>,
}

impl PortfolioVectorMemory {
    /// Every slot starts uniform over cash and the `m` assets.
    pub fn new(len: usize, m: usize) -> Self {
        Self { m, slots: vec![PortfolioVector::uniform(m); len] }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn assets(&self) -> usize {
        self.m
    }

    pub fn read(&self, t: usize) -> Result<&PortfolioVector> {
        self.slots
            .get(t)
            .ok_or_else(|| Error::Domain(format!("memory slot {t} outside 0..{}", self.slots.len())))
    }

    pub fn write(&mut self, t: usize, w: PortfolioVector) -> Result<()> {
        if w.assets() != self.m {
            return Err(Error::InvalidPortfolio(format!(
                "memory holds {} assets, vector has {}",
                self.m,
                w.assets()
            )));
        }
        let len = self.slots.len();
        let slot = self
            .slots
            .get_mut(t)
            .ok_or_else(|| Error::Domain(format!("memory slot {t} outside 0..{len}")))?;
        *slot = w;
        Ok(())
    }

    /// Validating write from raw weights.
    pub fn write_weights(&mut self, t: usize, w: Vec<f64>) -> Result<()> {
        self.write(t, PortfolioVector::new(w)?)
    }

    pub fn slots(&self) -> &[PortfolioVector] {
        &self.slots
    }

    fn to_tensor(&self) -> Tensor {
        let data = self.slots.iter().flat_map(|w| w.weights().iter().copied()).collect();
        Tensor::new(vec![self.slots.len(), self.m + 1], data)
    }

    fn from_tensor(t: &Tensor) -> Result<Self> {
        let [len, m1] = <[usize; 2]>::try_from(t.shape())
            .map_err(|_| Error::Data(format!("memory tensor has shape {:?}", t.shape())))?;
        let slots = t
            .data()
            .chunks(m1)
            .map(|row| PortfolioVector::new(row.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        debug_assert_eq!(slots.len(), len);
        Ok(Self { m: m1 - 1, slots })
    }
}

/// Start of a batch of `n_b` decisions ending at `t`, biased toward recent
/// periods: offset `k` has probability `beta (1 - beta)^k`, starts before 1
/// are redrawn.
pub fn sample_batch_start<R: Rng + ?Sized>(t: usize, n_b: usize, beta: f64, rng: &mut R) -> Result<usize> {
    sample_batch_start_from(t, n_b, beta, 1, rng)
}

/// As [`sample_batch_start`] with the earliest admissible start given explicitly.
pub fn sample_batch_start_from<R: Rng + ?Sized>(
    t: usize,
    n_b: usize,
    beta: f64,
    earliest: usize,
    rng: &mut R,
) -> Result<usize> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Config(format!("sample bias {beta} outside (0, 1]")));
    }
    if n_b == 0 || t < n_b + earliest {
        return Err(Error::Config(format!(
            "no batch of {n_b} periods fits between {earliest} and {t}"
        )));
    }
    let newest = t - n_b;
    if newest == earliest {
        return Ok(newest);
    }
    let geo = Geometric::new(beta).map_err(|e| Error::Config(e.to_string()))?;
    loop {
        let k = geo.sample(rng);
        if k <= (newest - earliest) as u64 {
            return Ok(newest - k as usize);
        }
    }
}

/// Contiguous decisions `start .. start + len` with everything the reward needs.
#[derive(Debug, Clone)]
pub struct MiniBatch {
    pub start: usize,
    pub len: usize,
    /// `[3, len * m, n]` observations.
    pub x: Tensor,
    /// `[len, m]` non-cash part of `w_{tau-1}` as read from memory.
    pub w_prev: Tensor,
    /// `[len, m + 1]` weights drifted from `w_{tau-1}` by `y_tau`.
    pub w_evolved: Tensor,
    /// `[len, m + 1]` relatives `y_{tau+1}`.
    pub y_next: Tensor,
}

impl MiniBatch {
    /// Fails unless `1 <= start`, `start >= n - 1`, and `start + len <= t`.
    pub fn assemble(
        panel: &MarketPanel,
        memory: &PortfolioVectorMemory,
        n: usize,
        start: usize,
        len: usize,
        t: usize,
    ) -> Result<Self> {
        if start < earliest_start(n) || start + len > t || t >= panel.len() || len == 0 {
            return Err(Error::Domain(format!(
                "batch {start}..{} not within [{}, {t}] on a panel of {} periods",
                start + len,
                earliest_start(n),
                panel.len()
            )));
        }
        let m = panel.m();
        let mut tensors = Vec::with_capacity(len);
        let mut w_prev = Vec::with_capacity(len * m);
        let mut w_evolved = Vec::with_capacity(len * (m + 1));
        let mut y_next = Vec::with_capacity(len * (m + 1));
        for tau in start..start + len {
            tensors.push(panel.price_tensor(tau, n)?);
            let prev = memory.read(tau - 1)?;
            w_prev.extend_from_slice(prev.non_cash());
            w_evolved.extend(evolve_weights(prev, &panel.relative(tau))?.into_inner());
            y_next.extend(panel.relative(tau + 1));
        }
        let refs: Vec<_> = tensors.iter().collect();
        Ok(Self {
            start,
            len,
            x: batch_input(&refs),
            w_prev: Tensor::new(vec![len, m], w_prev),
            w_evolved: Tensor::new(vec![len, m + 1], w_evolved),
            y_next: Tensor::new(vec![len, m + 1], y_next),
        })
    }

    fn inputs(&self) -> [(&'static str, Tensor); 4] {
        [
            ("x", self.x.clone()),
            ("w_prev", self.w_prev.clone()),
            ("w_evolved", self.w_evolved.clone()),
            ("y_next", self.y_next.clone()),
        ]
    }
}

/// First decision index with a full window, a previous slot, and a relative.
pub fn earliest_start(n: usize) -> usize {
    n.saturating_sub(1).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub window_size: usize,
    pub total_steps: u64,
    pub regularization_coefficient: f64,
    pub learning_rate: f64,
    pub sample_bias: f64,
    pub rolling_steps: usize,
    pub fees: CommissionSchedule,
    /// Unrolled remainder-factor iterations inside the reward.
    pub fixed_k: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 50,
            window_size: 50,
            total_steps: 2_000_000,
            regularization_coefficient: 1e-8,
            learning_rate: 3e-5,
            sample_bias: 5e-5,
            rolling_steps: 30,
            fees: CommissionSchedule::uniform(0.0025).expect("valid default commission"),
            fixed_k: DEFAULT_FIXED_K,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 || self.window_size == 0 {
            return bad("batch_size and window_size must be positive");
        }
        if !(self.sample_bias > 0.0 && self.sample_bias < 1.0) {
            return bad("sample_bias must lie in (0, 1)");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(self.regularization_coefficient >= 0.0) {
            return bad("regularization_coefficient must be non-negative");
        }
        if self.fixed_k == 0 {
            return bad("fixed_k must be at least 1");
        }
        Ok(())
    }
}

/// The batch objective `mean(r) - L2` built around a policy.
#[derive(Debug, Clone)]
pub struct RewardGraph {
    pub graph: Graph,
    pub batch: usize,
    pub policy: PolicyNodes,
    pub mu: NodeId,
    pub per_period: NodeId,
    pub reward: NodeId,
    pub l2: NodeId,
    pub objective: NodeId,
}

impl RewardGraph {
    pub fn build(
        topology: &PolicyTopology,
        params: &ParameterSet,
        batch: usize,
        fees: &CommissionSchedule,
        fixed_k: usize,
        l2_coefficient: f64,
    ) -> Result<Self> {
        let (m, n) = (topology.m, topology.n);
        let mut g = Graph::new();
        let x = g.data_input("x", &[FEATURES, batch * m, n]);
        let w_prev = g.data_input("w_prev", &[batch, m]);
        let w_evolved = g.data_input("w_evolved", &[batch, m + 1]);
        let y_next = g.data_input("y_next", &[batch, m + 1]);
        let policy = add_policy(&mut g, topology, batch, x, w_prev)?;
        let w = policy.weights;

        let w_assets = g.columns(w, 1, m + 1)?;
        let w_cash = g.columns(w, 0, 1)?;
        let we_assets = g.columns(w_evolved, 1, m + 1)?;
        let we_cash = g.columns(w_evolved, 0, 1)?;
        let denom = g.scale(w_cash, -fees.purchasing());
        let denom = g.offset(denom, 1.0);
        let denom = g.reshape(denom, &[batch])?;
        let base = g.scale(we_cash, -fees.purchasing());
        let base = g.offset(base, 1.0);
        let base = g.reshape(base, &[batch])?;

        let moved = g.sub(we_assets, w_assets)?;
        let moved = g.abs(moved);
        let turnover = g.sum_last(moved)?;
        let mut mu = g.scale(turnover, fees.mean_rate());
        for _ in 0..fixed_k {
            let kept = g.row_scale(w_assets, mu)?;
            let sold = g.sub(we_assets, kept)?;
            let sold = g.relu(sold);
            let sold = g.sum_last(sold)?;
            let cost = g.scale(sold, fees.round_trip());
            let numer = g.sub(base, cost)?;
            mu = g.div(numer, denom)?;
        }

        let gain = g.mul(w, y_next)?;
        let gain = g.sum_last(gain)?;
        let growth = g.mul(mu, gain)?;
        let per_period = g.ln(growth);
        let reward = g.mean_batch(per_period)?;
        let l2 = l2_penalty_node(&mut g, params, l2_coefficient)?;
        let objective = g.sub(reward, l2)?;
        g.set_output("objective", objective);
        Ok(Self { graph: g, batch, policy, mu, per_period, reward, l2, objective })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub reward: f64,
    pub l2: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchEvaluation {
    pub reward: f64,
    pub l2: f64,
    pub objective: f64,
    pub per_period: Vec<f64>,
    pub mu: Vec<f64>,
    /// `w_tau` for every decision in the batch.
    pub weights: Vec<PortfolioVector>,
}

/// Policy, optimizer, memory, and sampler state of one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub policy: Policy,
    pub config: TrainingConfig,
    pub adam: AdamState,
    pub memory: PortfolioVectorMemory,
    pub rng: ChaCha8Rng,
    pub step: u64,
    pub curve: Vec<CurvePoint>,
    reward: RewardGraph,
}

impl Trainer {
    /// Memory spans `periods` panel periods; the sampler is seeded from `seed`.
    pub fn new(policy: Policy, config: TrainingConfig, periods: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if policy.topology.n != config.window_size {
            return Err(Error::Config(format!(
                "policy window {} differs from window_size {}",
                policy.topology.n, config.window_size
            )));
        }
        let reward = RewardGraph::build(
            &policy.topology,
            &policy.params,
            config.batch_size,
            &config.fees,
            config.fixed_k,
            config.regularization_coefficient,
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Ok(Self {
            adam: AdamState::for_params(&policy.params),
            memory: PortfolioVectorMemory::new(periods, policy.topology.m),
            policy,
            config,
            rng,
            step: 0,
            curve: Vec::new(),
            reward,
        })
    }

    pub fn reward_graph(&self) -> &RewardGraph {
        &self.reward
    }

    pub fn batch(&self, panel: &MarketPanel, start: usize, t: usize) -> Result<MiniBatch> {
        MiniBatch::assemble(panel, &self.memory, self.config.window_size, start, self.config.batch_size, t)
    }

    /// Evaluates a batch without touching parameters or memory.
    pub fn evaluate(&self, batch: &MiniBatch) -> Result<BatchEvaluation> {
        let ev = self.reward.graph.forward(&self.policy.params, &batch.inputs())?;
        let m1 = self.policy.topology.m + 1;
        let weights = ev
            .value(self.reward.policy.weights)
            .data()
            .chunks(m1)
            .map(|w| PortfolioVector::new(w.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(BatchEvaluation {
            reward: ev.value(self.reward.reward).item(),
            l2: ev.value(self.reward.l2).item(),
            objective: ev.value(self.reward.objective).item(),
            per_period: ev.value(self.reward.per_period).data().to_vec(),
            mu: ev.value(self.reward.mu).data().to_vec(),
            weights,
        })
    }

    /// Gradient of the objective on a batch, parameters untouched.
    pub fn gradient(&self, batch: &MiniBatch) -> Result<tensorgrad::Gradients> {
        let ev = self.reward.graph.forward(&self.policy.params, &batch.inputs())?;
        Ok(ev.backward(&self.policy.params, self.reward.objective)?)
    }

    /// One ascent step on `mean(r) - L2`. Memory slots of the batch receive
    /// the actions computed before the update.
    pub fn train_step(&mut self, batch: &MiniBatch) -> Result<CurvePoint> {
        let fault = |message: String| Error::Numerical { period: batch.start, message };
        let ev = self
            .reward
            .graph
            .forward(&self.policy.params, &batch.inputs())
            .map_err(|e| fault(format!("step {}: forward failed: {e}", self.step + 1)))?;
        let point = CurvePoint {
            step: self.step + 1,
            reward: ev.value(self.reward.reward).item(),
            l2: ev.value(self.reward.l2).item(),
            objective: ev.value(self.reward.objective).item(),
        };
        if !point.objective.is_finite() {
            return Err(fault(format!("step {}: objective {point:?}", point.step)));
        }
        let grads = ev
            .backward(&self.policy.params, self.reward.objective)
            .map_err(|e| fault(format!("step {}: backward failed: {e}", point.step)))?;
        let weights: Vec<f64> = ev.value(self.reward.policy.weights).data().to_vec();
        drop(ev);
        adam_step(&mut self.policy.params, &grads.params, &mut self.adam, self.config.learning_rate, true)
            .map_err(|e| fault(format!("step {}: {e}", point.step)))?;
        let m1 = self.policy.topology.m + 1;
        for (i, w) in weights.chunks(m1).enumerate() {
            self.memory.write_weights(batch.start + i, w.to_vec())?;
        }
        self.step += 1;
        self.curve.push(point);
        Ok(point)
    }

    fn sample_start(&mut self, t: usize) -> Result<usize> {
        sample_batch_start_from(
            t,
            self.config.batch_size,
            self.config.sample_bias,
            earliest_start(self.config.window_size),
            &mut self.rng,
        )
    }

    /// Trains until `config.total_steps` steps have run, sampling batches
    /// that end no later than `t`. With `checkpoint = Some((path, every))`
    /// the state is saved every `every` steps.
    pub fn pretrain(&mut self, panel: &MarketPanel, t: usize, checkpoint: Option<(&Path, u64)>) -> Result<()> {
        if self.memory.len() != panel.len() {
            return Err(Error::Config(format!(
                "memory spans {} periods, panel has {}",
                self.memory.len(),
                panel.len()
            )));
        }
        if t >= panel.len() || t < self.config.batch_size + earliest_start(self.config.window_size) {
            return Err(Error::Data(format!(
                "training range ending at {t} cannot hold a batch of {} with window {}",
                self.config.batch_size, self.config.window_size
            )));
        }
        while self.step < self.config.total_steps {
            let start = self.sample_start(t)?;
            let batch = self.batch(panel, start, t)?;
            self.train_step(&batch)?;
            if let Some((path, every)) = checkpoint {
                if every > 0 && self.step % every == 0 {
                    self.save(path)?;
                }
            }
        }
        Ok(())
    }

    /// `rolling_steps` ascent steps on batches ending no later than `t`.
    pub fn online_update(&mut self, panel: &MarketPanel, t: usize) -> Result<()> {
        for _ in 0..self.config.rolling_steps {
            let start = self.sample_start(t)?;
            let batch = self.batch(panel, start, t)?;
            self.train_step(&batch)?;
        }
        Ok(())
    }

    /// Recomputes slots `from..to` in time order, each from the freshly
    /// written previous slot, and returns the largest change of any weight.
    pub fn memory_sweep(&mut self, panel: &MarketPanel, from: usize, to: usize) -> Result<f64> {
        let mut worst = 0.0_f64;
        for d in from.max(earliest_start(self.config.window_size))..to {
            let x = panel.price_tensor(d, self.config.window_size)?;
            let w = self.policy.act(&x, self.memory.read(d - 1)?)?.weights;
            let old = self.memory.read(d)?;
            for (a, b) in w.weights().iter().zip(old.weights()) {
                worst = worst.max((a - b).abs());
            }
            self.memory.write(d, w)?;
        }
        Ok(worst)
    }

    /// Writes `<path>` (tensors: parameters, Adam moments, memory) and
    /// `<path>.state.json` (step counters, sampler state, curve).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut entries = checkpoint::parameter_entries(&self.policy.params);
        for (prefix, map) in [("adam.m.", &self.adam.first), ("adam.v.", &self.adam.second)] {
            entries.extend(map.iter().map(|(name, t)| Entry {
                name: format!("{prefix}{name}"),
                kind: None,
                tensor: t.clone(),
            }));
        }
        entries.push(Entry { name: "pvm".into(), kind: None, tensor: self.memory.to_tensor() });
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        checkpoint::write_entries(&mut file, &entries)?;
        file.flush()?;
        let state = SavedState {
            topology: self.policy.topology,
            config: self.config,
            step: self.step,
            adam_step: self.adam.step,
            complete: self.step >= self.config.total_steps,
            rng: self.rng.clone(),
            curve: self.curve.clone(),
        };
        std::fs::write(state_path(path), serde_json::to_string_pretty(&state)?)?;
        Ok(())
    }

    /// Restores a trainer saved by [`Trainer::save`]. `config` may raise
    /// `total_steps`; every other field must match the saved run.
    pub fn resume(path: &Path, config: TrainingConfig) -> Result<Self> {
        let state: SavedState = serde_json::from_str(&std::fs::read_to_string(state_path(path))?)?;
        let same = TrainingConfig { total_steps: state.config.total_steps, ..config };
        if same != state.config {
            return Err(Error::Config("resumed configuration differs from the checkpoint".into()));
        }
        let entries = checkpoint::read_entries(std::io::BufReader::new(std::fs::File::open(path)?))?;
        let params = checkpoint::parameters_from_entries(&entries);
        let mut adam = AdamState { step: state.adam_step, ..AdamState::default() };
        let mut memory = None;
        for e in entries.iter().filter(|e| e.kind.is_none()) {
            if let Some(name) = e.name.strip_prefix("adam.m.") {
                adam.first.insert(name.to_string(), e.tensor.clone());
            } else if let Some(name) = e.name.strip_prefix("adam.v.") {
                adam.second.insert(name.to_string(), e.tensor.clone());
            } else if e.name == "pvm" {
                memory = Some(PortfolioVectorMemory::from_tensor(&e.tensor)?);
            }
        }
        let memory = memory.ok_or_else(|| Error::Data("checkpoint has no memory".into()))?;
        let policy = Policy::new(state.topology, params)?;
        let mut trainer = Trainer::new(policy, config, memory.len(), 0)?;
        trainer.adam = adam;
        trainer.memory = memory;
        trainer.rng = state.rng;
        trainer.step = state.step;
        trainer.curve = state.curve;
        Ok(trainer)
    }

    /// Training curve CSV `step,R,l2,objective`.
    pub fn write_curve_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["step", "R", "l2", "objective"])?;
        for p in &self.curve {
            wtr.write_record([p.step.to_string(), p.reward.to_string(), p.l2.to_string(), p.objective.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct SavedState {
    topology: PolicyTopology,
    config: TrainingConfig,
    step: u64,
    adam_step: u64,
    complete: bool,
    rng: ChaCha8Rng,
    curve: Vec<CurvePoint>,
}

pub fn state_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".state.json");
    PathBuf::from(s)
}

/// Whether a saved training state ran to its configured step count.
pub fn checkpoint_is_complete(path: &Path) -> Result<bool> {
    let state: SavedState = serde_json::from_str(&std::fs::read_to_string(state_path(path))?)?;
    Ok(state.complete)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_memory_is_uniform_and_validates_writes() {
        let mut pvm = PortfolioVectorMemory::new(10, 11);
        for t in [0, 5, 9] {
            assert_eq!(pvm.read(t).unwrap().weights(), &[1.0 / 12.0; 12]);
        }
        let w = PortfolioVector::all_in(11, 3);
        pvm.write(4, w.clone()).unwrap();
        assert_eq!(pvm.read(4).unwrap(), &w);
        let mut bad = vec![0.0; 12];
        bad[0] = 0.9;
        assert!(pvm.write_weights(4, bad).is_err());
        assert!(pvm.read(10).is_err());
        assert!(pvm.write(10, PortfolioVector::cash(11)).is_err());
        assert!(pvm.write(1, PortfolioVector::cash(2)).is_err());
    }

    #[test]
    fn batch_start_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(sample_batch_start(51, 50, 5e-5, &mut rng).unwrap(), 1);
            assert_eq!(sample_batch_start(500, 50, 1.0, &mut rng).unwrap(), 450);
        }
        assert!(sample_batch_start(50, 50, 0.5, &mut rng).is_err());
        assert!(sample_batch_start(500, 50, 0.0, &mut rng).is_err());
        for _ in 0..1000 {
            let s = sample_batch_start(60, 50, 0.01, &mut rng).unwrap();
            assert!((1..=10).contains(&s));
        }
    }

    #[test]
    fn memory_tensor_round_trip() {
        let mut pvm = PortfolioVectorMemory::new(3, 2);
        pvm.write(1, PortfolioVector::new(vec![0.2, 0.3, 0.5]).unwrap()).unwrap();
        assert_eq!(PortfolioVectorMemory::from_tensor(&pvm.to_tensor()).unwrap(), pvm);
    }
}

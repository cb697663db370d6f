//! End-to-end acceptance checks. Prints one PASS/FAIL line per check and
//! exits nonzero if any fails.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use eiie::accounting::{
    portfolio_value_path, remainder_map, solve_mu, solve_mu_from, CommissionSchedule, PeriodLedgerEntry,
    PortfolioVector, SolveMode,
};
use eiie::backtest::{benchmark_ucrp, compare, run_backtest, simulate, BacktestConfig, BacktestReport};
use eiie::config::RunConfig;
use eiie::policy::{Policy, PolicyTopology, TopologyKind};
use eiie::tensorgrad::Tensor;
use eiie::training::{sample_batch_start, Trainer, TrainingConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

const INSTANCES: usize = 1000;

fn instances() -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    (0..INSTANCES).map(|_| random_instance(&mut rng, 0.01)).collect()
}

fn mu_solver() -> Outcome {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst_oracle = 0.0_f64;
    let mut worst_start = 0.0_f64;
    let mut failures = Vec::new();
    for (k, inst) in instances().iter().enumerate() {
        let fees = inst.fees();
        let f = |mu: f64| remainder_map(mu, &inst.w, &inst.w_evolved, &fees);
        let (mu, _) = solve_mu(&inst.w, &inst.w_evolved, &fees, SolveMode::tolerance(1e-10)).unwrap();
        let oracle = bisection_oracle(inst);
        worst_oracle = worst_oracle.max((mu - oracle).abs());

        for _ in 0..5 {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if f(hi) < f(lo) {
                failures.push(format!("instance {k}: f not monotone on [{lo}, {hi}]"));
            }
        }
        if !(f(0.0) > 0.0) {
            failures.push(format!("instance {k}: f(0) = {}", f(0.0)));
        }
        if !(f(1.0) <= 1.0) {
            failures.push(format!("instance {k}: f(1) = {}", f(1.0)));
        }
        for (start, rising) in [(0.0, true), (1.0, false)] {
            let mut prev = start;
            for _ in 0..60 {
                let next = f(prev);
                if (rising && next < prev) || (!rising && next > prev) {
                    failures.push(format!("instance {k}: iterates from {start} not monotone"));
                    break;
                }
                prev = next;
            }
            if (prev - oracle).abs() > 1e-10 {
                failures.push(format!("instance {k}: iterates from {start} end at {prev}, oracle {oracle}"));
            }
        }
        for _ in 0..10 {
            let start: f64 = rng.random();
            let (m, _) = solve_mu_from(start, &inst.w, &inst.w_evolved, &fees, SolveMode::tolerance(1e-10)).unwrap();
            worst_start = worst_start.max((m - oracle).abs());
        }
    }
    let elapsed = clock.elapsed();
    let pass = worst_oracle <= 1e-10 && worst_start <= 1e-10 && failures.is_empty() && elapsed < Duration::from_secs(5);
    let mut detail = format!(
        "max |mu - bisection| {worst_oracle:.2e}, max over random starts {worst_start:.2e}, {} property violations, {}",
        failures.len(),
        secs(elapsed)
    );
    if let Some(first) = failures.first() {
        detail.push_str(&format!("; first: {first}"));
    }
    outcome(pass, detail)
}

fn self_financing() -> Outcome {
    let mut worst = 0.0_f64;
    for inst in instances() {
        let (mu, _) = solve_mu(&inst.w, &inst.w_evolved, &inst.fees(), SolveMode::tolerance(1e-10)).unwrap();
        worst = worst.max(self_financing_residual(&inst, mu).abs());
    }
    outcome(worst <= 1e-12, format!("max cash imbalance {worst:.2e} over {INSTANCES} instances"))
}

fn zero_cost_identities() -> Outcome {
    let mut not_one = 0;
    let mut worst_same = 0.0_f64;
    for inst in instances() {
        for mode in [SolveMode::tolerance(1e-10), SolveMode::FixedIterations(10)] {
            let (mu, _) = solve_mu(&inst.w, &inst.w_evolved, &CommissionSchedule::zero(), mode).unwrap();
            if mu != 1.0 {
                not_one += 1;
            }
            let (same, _) = solve_mu(&inst.w, &inst.w, &inst.fees(), mode).unwrap();
            worst_same = worst_same.max((same - 1.0).abs());
        }
    }
    outcome(
        not_one == 0 && worst_same <= 1e-14,
        format!("zero fees: {not_one} results differ from 1; untraded: max |mu - 1| {worst_same:.1e}"),
    )
}

fn gradient_fidelity() -> Outcome {
    let clock = Instant::now();
    let panel = market(&[("A", 0.002, 0.02), ("B", -0.001, 0.03), ("C", 0.0, 0.01)], 20, 5);
    let mut report = Vec::new();
    let mut pass = true;
    for kind in [TopologyKind::Cnn, TopologyKind::BasicRnn, TopologyKind::Lstm] {
        let topo = match kind {
            TopologyKind::Cnn => PolicyTopology::cnn(3, 8),
            _ => PolicyTopology::recurrent(kind, 3, 8, 4),
        };
        let config = TrainingConfig {
            batch_size: 4,
            window_size: 8,
            regularization_coefficient: 1e-3,
            fees: CommissionSchedule::new(0.0025, 0.004).unwrap(),
            ..TrainingConfig::default()
        };
        let mut trainer = Trainer::new(Policy::initialized(topo, 3).unwrap(), config, panel.len(), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for t in 0..panel.len() {
            trainer.memory.write(t, random_portfolio(3, &mut rng)).unwrap();
        }
        let batch = trainer.batch(&panel, 9, 14).unwrap();
        let grads = trainer.gradient(&batch).unwrap().params;
        let (mut checked, mut bad, mut worst_rel) = (0usize, 0usize, 0.0_f64);
        let names: Vec<String> = trainer.policy.params.names().map(String::from).collect();
        for name in names {
            let len = trainer.policy.params.tensor(&name).unwrap().len();
            for j in 0..len {
                let h = 1e-6;
                let base = trainer.policy.params.tensor(&name).unwrap().data()[j];
                let mut at = |v: f64| {
                    trainer.policy.params.get_mut(&name).unwrap().value.data_mut()[j] = v;
                    trainer.evaluate(&batch).unwrap().objective
                };
                let fd = (at(base + h) - at(base - h)) / (2.0 * h);
                at(base);
                let an = grads[&name].data()[j];
                let err = (an - fd).abs();
                let ok = if fd.abs() < 1e-3 { err < 1e-7 } else { err / fd.abs() < 1e-4 };
                if fd.abs() >= 1e-3 {
                    worst_rel = worst_rel.max(err / fd.abs());
                }
                checked += 1;
                if !ok {
                    bad += 1;
                }
            }
        }
        pass &= bad == 0;
        report.push(format!("{kind}: {bad}/{checked} off, worst rel {worst_rel:.1e}"));
    }
    let elapsed = clock.elapsed();
    pass &= elapsed < Duration::from_secs(60);
    outcome(pass, format!("{}; {}", report.join("; "), secs(elapsed)))
}

fn accounting_closure() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst_path = 0.0_f64;
    for _ in 0..20 {
        let m = rng.random_range(1..=11);
        let fees = CommissionSchedule::new(rng.random_range(0.0..0.01), rng.random_range(0.0..0.01)).unwrap();
        let mut w_prev = PortfolioVector::cash(m);
        let mut ledger = Vec::new();
        for t in 0..1000 {
            let mut y = vec![1.0];
            y.extend((0..m).map(|_| (0.05 * (rng.random::<f64>() - 0.5)).exp()));
            let target = random_portfolio(m, &mut rng);
            let e = PeriodLedgerEntry::record(t, y, &w_prev, target.clone(), &fees, SolveMode::default()).unwrap();
            ledger.push(e);
            w_prev = target;
        }
        let path = portfolio_value_path(1.0, &ledger);
        let mut product = 1.0;
        let mut held = PortfolioVector::cash(m);
        for (e, p) in ledger.iter().zip(&path[1..]) {
            let gain: f64 = e.y.iter().zip(held.weights()).map(|(a, b)| a * b).sum();
            product *= e.mu * gain;
            worst_path = worst_path.max((p - product).abs() / product);
            held = e.w_target.clone();
        }
    }

    let panel = market(&[("A", 0.001, 0.02), ("B", -0.001, 0.03), ("C", 0.0, 0.01), ("D", 0.0005, 0.04)], 501, 9);
    let mut worst_summary = 0.0_f64;
    let mut worst_mdd_oracle = 0.0_f64;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let config = BacktestConfig::new(1, 501, CommissionSchedule::uniform(0.0025).unwrap());
        let report = simulate("random", &panel, &config, |_, _, _| Ok(random_portfolio(4, &mut rng))).unwrap();
        let mut path = vec![report.initial_value];
        let mut acc = 0.0;
        for e in &report.records {
            acc += e.log_return;
            path.push(report.initial_value * acc.exp());
        }
        let rho: Vec<f64> = report.records.iter().map(|e| e.rho).collect();
        let fapv = path[path.len() - 1] / path[0];
        let mdd = exhaustive_drawdown(&path);
        let sr = two_pass_sharpe(&rho);
        let s = report.summary;
        worst_summary = worst_summary
            .max((s.fapv - fapv).abs())
            .max((s.mdd - mdd).abs())
            .max((s.sharpe.unwrap() - sr).abs());
        worst_mdd_oracle = worst_mdd_oracle.max((exhaustive_drawdown(&report.path) - s.mdd).abs());
    }
    outcome(
        worst_path <= 1e-9 && worst_summary <= 1e-12 && worst_mdd_oracle <= 1e-12,
        format!(
            "exp-sum vs product max rel {worst_path:.1e}; summary vs recomputed {worst_summary:.1e}; \
             MDD vs pair oracle {worst_mdd_oracle:.1e}"
        ),
    )
}

fn sampling_distribution() -> Outcome {
    let (t, n_b, beta, draws) = (1000usize, 50usize, 0.5, 100_000usize);
    let newest = t - n_b;
    let bins = 13;
    let mut counts = vec![0usize; bins + 1];
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..draws {
        let k = newest - sample_batch_start(t, n_b, beta, &mut rng).unwrap();
        counts[k.min(bins)] += 1;
    }
    let mut stat = 0.0;
    for (k, c) in counts.iter().enumerate() {
        let p = if k < bins { beta * (1.0 - beta).powi(k as i32) } else { (1.0 - beta).powi(bins as i32) };
        let e = p * draws as f64;
        stat += (*c as f64 - e).powi(2) / e;
    }
    let critical = ChiSquared::new(bins as f64).unwrap().inverse_cdf(0.99);
    let degenerate = (0..1000).all(|_| sample_batch_start(t, n_b, 1.0, &mut rng).unwrap() == newest);
    outcome(
        stat < critical && degenerate,
        format!("chi-square {stat:.2} vs critical {critical:.2} ({bins} dof); beta = 1 always newest: {degenerate}"),
    )
}

/// One full learning experiment: 5 assets, the first drifting, 3000
/// training periods and 500 held out.
fn learning_config(commission: f64) -> RunConfig {
    let period = 1800;
    RunConfig::parse(&format!(
        "data_source = synthetic:A0:0.002:0.01,A1:0:0.01,A2:0:0.01,A3:0:0.01,A4:0:0.01\n\
         number_of_assets = 6\n\
         train_start = 0\n\
         train_end = {}\n\
         test_start = {}\n\
         test_end = {}\n\
         total_steps = 2e4\n\
         commission_rate = {commission}\n\
         data_seed = 7\n\
         policy_seed = 1\n\
         training_seed = 1\n",
        3000 * period,
        3000 * period,
        3500 * period
    ))
    .unwrap()
}

struct LearningRun {
    report: BacktestReport,
    ucrp: BacktestReport,
    drifting: usize,
    static_turnover: f64,
    sweep: f64,
    elapsed: Duration,
    files: BTreeMap<String, Vec<u8>>,
}

fn learning_run(config: &RunConfig, dir: &Path) -> LearningRun {
    let clock = Instant::now();
    let data = config.prepare(&config.load_market(None).unwrap()).unwrap();
    let panel = &data.panel;
    let mut trainer = config.trainer(&data).unwrap();
    trainer.pretrain(panel, data.train_last, None).unwrap();
    trainer.save(&dir.join("pretrained.ckpt")).unwrap();

    let sweep = trainer.clone().memory_sweep(panel, 0, data.train_last).unwrap();
    let mut frozen = config.backtest(&data).unwrap();
    frozen.online_learning = false;
    let static_turnover = run_backtest(&mut trainer.clone(), panel, &frozen).unwrap().mean_turnover();

    let report = run_backtest(&mut trainer, panel, &config.backtest(&data).unwrap()).unwrap();
    let ucrp = benchmark_ucrp(panel, &config.benchmark(&data).unwrap()).unwrap();
    let elapsed = clock.elapsed();

    trainer.save(&dir.join("final.ckpt")).unwrap();
    report.write_ledger_csv(std::fs::File::create(dir.join("ledger.csv")).unwrap()).unwrap();
    report.write_plot_csv(std::fs::File::create(dir.join("plot.csv")).unwrap()).unwrap();
    std::fs::write(dir.join("summary.json"), report.summary_json().unwrap()).unwrap();
    let table = compare(&[&report, &ucrp]).unwrap();
    table.write_csv(std::fs::File::create(dir.join("comparison.csv")).unwrap()).unwrap();
    std::fs::write(dir.join("manifest.txt"), config.to_text()).unwrap();

    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        files.insert(path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).unwrap());
    }
    let drifting = 1 + panel.assets.iter().position(|a| a == "A0").unwrap();
    LearningRun { report, ucrp, drifting, static_turnover, sweep, elapsed, files }
}

fn learning(run: &LearningRun) -> Outcome {
    let (policy, ucrp) = (run.report.summary.fapv, run.ucrp.summary.fapv);
    let weight = run.report.mean_weight(run.drifting);
    outcome(
        policy > ucrp && weight > 0.5 && run.elapsed < Duration::from_secs(600),
        format!(
            "fAPV {policy:.4} vs UCRP {ucrp:.4}; mean weight on drifting asset {weight:.4} (cash {:.4}); {}",
            run.report.mean_weight(0),
            secs(run.elapsed)
        ),
    )
}

fn cost_awareness(with_cost: &LearningRun, free: &LearningRun) -> Outcome {
    let elapsed = with_cost.elapsed + free.elapsed;
    outcome(
        with_cost.static_turnover < free.static_turnover && elapsed < Duration::from_secs(600),
        format!(
            "mean turnover {:.5} trained at c = 0.25% vs {:.5} trained at c = 0 (online learning {:.5} vs {:.5}); {}",
            with_cost.static_turnover,
            free.static_turnover,
            with_cost.report.mean_turnover(),
            free.report.mean_turnover(),
            secs(elapsed)
        ),
    )
}

fn memory_convergence(run: &LearningRun) -> Outcome {
    outcome(run.sweep < 1e-3, format!("largest slot change in one sweep {:.3e}", run.sweep))
}

fn policy_input(policy: &Policy, x: &Tensor, w: &[f64]) -> Vec<(&'static str, Tensor)> {
    vec![("x", x.clone()), ("w_prev", Tensor::new(vec![1, policy.topology.m], w.to_vec()))]
}

fn structural_invariants() -> Outcome {
    let (m, n) = (4usize, 9usize);
    let order = [2usize, 0, 3, 1];
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst_perm = 0.0_f64;
    let mut leaks = 0usize;
    let mut inert = 0usize;
    for kind in [TopologyKind::Cnn, TopologyKind::BasicRnn, TopologyKind::Lstm] {
        let topo = match kind {
            TopologyKind::Cnn => PolicyTopology::cnn(m, n),
            _ => PolicyTopology::recurrent(kind, m, n, 6),
        };
        let policy = Policy::initialized(topo, 8).unwrap();
        let nodes = policy.nodes();
        let run = |x: &Tensor, w: &[f64]| {
            let ev = policy.graph().forward(&policy.params, &policy_input(&policy, x, w)).unwrap();
            (ev.value(nodes.weights).data().to_vec(), ev.value(nodes.scores).data().to_vec())
        };
        for _ in 0..5 {
            let x: Vec<f64> = (0..3 * m * n).map(|_| 1.0 + 0.05 * (rng.random::<f64>() - 0.5)).collect();
            let x = Tensor::new(vec![3, m, n], x);
            let w_prev = random_portfolio(m, &mut rng);
            let (weights, scores) = run(&x, w_prev.non_cash());

            let mut px = vec![0.0; x.len()];
            for f in 0..3 {
                for (k, &i) in order.iter().enumerate() {
                    for l in 0..n {
                        px[(f * m + k) * n + l] = x.data()[(f * m + i) * n + l];
                    }
                }
            }
            let pw: Vec<f64> = order.iter().map(|&i| w_prev.non_cash()[i]).collect();
            let (pweights, _) = run(&Tensor::new(vec![3, m, n], px), &pw);
            worst_perm = worst_perm.max((pweights[0] - weights[0]).abs());
            for (k, &i) in order.iter().enumerate() {
                worst_perm = worst_perm.max((pweights[k + 1] - weights[i + 1]).abs());
            }

            for j in 0..m {
                let mut bumped = x.data().to_vec();
                for f in 0..3 {
                    for l in 0..n {
                        bumped[(f * m + j) * n + l] *= 1.0 + 0.01 * (l as f64 + 1.0);
                    }
                }
                let (_, s) = run(&Tensor::new(vec![3, m, n], bumped), w_prev.non_cash());
                for i in 0..m {
                    if i != j && s[i].to_bits() != scores[i].to_bits() {
                        leaks += 1;
                    }
                }
                if s[j] == scores[j] {
                    inert += 1;
                }
            }
        }
    }
    outcome(
        worst_perm <= 1e-12 && leaks == 0 && inert == 0,
        format!("max permutation mismatch {worst_perm:.1e}; cross-row score changes {leaks}; unresponsive rows {inert}"),
    )
}

fn determinism(a: &LearningRun, b: &LearningRun) -> Outcome {
    let differing: Vec<&String> = a.files.keys().filter(|k| b.files.get(*k) != a.files.get(*k)).collect();
    let same_names = a.files.keys().eq(b.files.keys());
    outcome(
        differing.is_empty() && same_names && !a.files.is_empty(),
        format!("{} files compared, differing: {differing:?}", a.files.len()),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut record = |name: &'static str, o: Outcome| {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };
    record("1 remainder-factor solver", mu_solver());
    record("2 self-financing closure", self_financing());
    record("3 zero-cost identities", zero_cost_identities());
    record("4 gradient fidelity", gradient_fidelity());
    record("5 accounting closure", accounting_closure());
    record("6 batch-start distribution", sampling_distribution());

    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let paid = learning_run(&learning_config(0.0025), dirs[0].path());
    let free = learning_run(&learning_config(0.0), dirs[1].path());
    record("7 learning on a drifting market", learning(&paid));
    record("8 cost awareness", cost_awareness(&paid, &free));
    record("9 memory convergence", memory_convergence(&paid));
    record("10 structural invariants", structural_invariants());
    let again = learning_run(&learning_config(0.0025), dirs[2].path());
    record("11 determinism", determinism(&paid, &again));

    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    println!("{} of {} acceptance checks passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tensorgrad::checkpoint::{parameter_entries, parameters_from_entries, read_entries, write_entries};
use tensorgrad::{adam_step, AdamState, Graph, ParamKind, ParameterSet, Tensor};

fn softmax(scores: Vec<f64>, bias: f64) -> Vec<f64> {
    let m = scores.len();
    let mut g = Graph::new();
    let s = g.input("s", &[1, m]);
    let b = g.input("b", &[]);
    let w = g.softmax_with_bias(s, b).unwrap();
    let ev = g
        .forward(
            &ParameterSet::new(),
            &[("s", Tensor::new(vec![1, m], scores)), ("b", Tensor::scalar(bias))],
        )
        .unwrap();
    ev.value(w).data().to_vec()
}

proptest! {
    #[test]
    fn softmax_is_a_distribution_and_shift_invariant(
        scores in prop::collection::vec(-30.0f64..30.0, 1..12),
        bias in -30.0f64..30.0,
        shift in -50.0f64..50.0,
    ) {
        let w = softmax(scores.clone(), bias);
        prop_assert!(w.iter().all(|v| *v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted = softmax(scores.iter().map(|s| s + shift).collect(), bias + shift);
        for (a, b) in w.iter().zip(&shifted) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly(
        values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..40),
        bias in any::<f64>().prop_filter("finite", |v| v.is_finite()),
    ) {
        let mut ps = ParameterSet::new();
        ps.insert("layer.kernel", ParamKind::Weight, Tensor::from_vec(values.clone()));
        ps.insert("cash_bias", ParamKind::Bias, Tensor::scalar(bias));
        let mut buf = Vec::new();
        write_entries(&mut buf, &parameter_entries(&ps)).unwrap();
        let back = parameters_from_entries(&read_entries(buf.as_slice()).unwrap());
        prop_assert_eq!(back.len(), 2);
        for (name, p) in ps.iter() {
            let q = back.get(name).unwrap();
            prop_assert_eq!(p.kind, q.kind);
            prop_assert_eq!(p.value.shape(), q.value.shape());
            for (a, b) in p.value.data().iter().zip(q.value.data()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}

#[test]
fn height_one_convolution_never_mixes_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (cin, rows, width, cout, kw) = (3, 5, 9, 4, 3);
    let rand_t = |rng: &mut ChaCha8Rng, shape: Vec<usize>| {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    };
    let mut ps = ParameterSet::new();
    ps.insert("k", ParamKind::Weight, rand_t(&mut rng, vec![cout, cin, kw]));
    let mut g = Graph::new();
    let x = g.input("x", &[cin, rows, width]);
    let k = g.param("k", &[cout, cin, kw]).unwrap();
    let y = g.conv_row(x, k, None).unwrap();
    let base = rand_t(&mut rng, vec![cin, rows, width]);
    let y0 = g.forward(&ps, &[("x", base.clone())]).unwrap().value(y).clone();
    for row in 0..rows {
        let mut xp = base.clone();
        for ci in 0..cin {
            for j in 0..width {
                xp.data_mut()[(ci * rows + row) * width + j] += 0.5;
            }
        }
        let y1 = g.forward(&ps, &[("x", xp)]).unwrap().value(y).clone();
        let wo = width - kw + 1;
        for co in 0..cout {
            for r in 0..rows {
                let a = &y0.data()[(co * rows + r) * wo..(co * rows + r + 1) * wo];
                let b = &y1.data()[(co * rows + r) * wo..(co * rows + r + 1) * wo];
                if r == row {
                    assert_ne!(a, b, "row {row} should react to its own input");
                } else {
                    assert_eq!(a, b, "row {r} changed when row {row} was perturbed");
                }
            }
        }
    }
}

fn lstm_graph(rows: usize) -> Graph {
    let mut g = Graph::new();
    let x = g.input("x", &[rows, 3]);
    let h = g.input("h", &[rows, 8]);
    let c = g.input("c", &[rows, 8]);
    let wx = g.param("wx", &[3, 32]).unwrap();
    let wh = g.param("wh", &[8, 32]).unwrap();
    let b = g.param("b", &[32]).unwrap();
    let out = g.lstm_cell(x, h, c, wx, wh, b).unwrap();
    let s = g.sum_squares(out);
    g.set_output("loss", s);
    g
}

/// Large batches take the chunked parallel path; a single row never does.
/// Evaluating rows one at a time must reproduce the batched result bit for
/// bit, gradients included.
#[test]
fn batched_kernels_match_row_by_row_bitwise() {
    let rows = 512;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut rand_t = |shape: Vec<usize>| {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    };
    let mut ps = ParameterSet::new();
    ps.insert("wx", ParamKind::Weight, rand_t(vec![3, 32]));
    ps.insert("wh", ParamKind::Weight, rand_t(vec![8, 32]));
    ps.insert("b", ParamKind::Bias, rand_t(vec![32]));
    let x = rand_t(vec![rows, 3]);
    let h = rand_t(vec![rows, 8]);
    let c = rand_t(vec![rows, 8]);

    let big = lstm_graph(rows);
    let ev = big
        .forward(&ps, &[("x", x.clone()), ("h", h.clone()), ("c", c.clone())])
        .unwrap();
    let grads = ev.backward(&ps, big.output("loss").unwrap()).unwrap();

    let small = lstm_graph(1);
    for r in [0, 1, 255, 511] {
        let slice = |t: &Tensor, w: usize| Tensor::new(vec![1, w], t.data()[r * w..(r + 1) * w].to_vec());
        let ev1 = small
            .forward(&ps, &[("x", slice(&x, 3)), ("h", slice(&h, 8)), ("c", slice(&c, 8))])
            .unwrap();
        let g1 = ev1.backward(&ps, small.output("loss").unwrap()).unwrap();
        assert_eq!(
            g1.inputs["x"].data(),
            &grads.inputs["x"].data()[r * 3..(r + 1) * 3],
            "row {r}"
        );
        assert_eq!(
            g1.inputs["c"].data(),
            &grads.inputs["c"].data()[r * 8..(r + 1) * 8],
            "row {r}"
        );
    }
}

#[test]
fn forward_backward_and_adam_are_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut ps = ParameterSet::new();
        ps.insert("k", ParamKind::Weight, tensorgrad::truncated_normal(&[3, 2, 3], 0.5, &mut rng));
        let mut g = Graph::new();
        let x = g.data_input("x", &[2, 4, 6]);
        let k = g.param("k", &[3, 2, 3]).unwrap();
        let y = g.conv_row(x, k, None).unwrap();
        let y = g.relu(y);
        let loss = g.sum_squares(y);
        let input = Tensor::new(vec![2, 4, 6], (0..48).map(|i| (i as f64 * 0.37).sin()).collect());
        let mut state = AdamState::for_params(&ps);
        let mut trace = Vec::new();
        for _ in 0..25 {
            let ev = g.forward(&ps, &[("x", input.clone())]).unwrap();
            trace.push(ev.value(loss).item().to_bits());
            let grads = ev.backward(&ps, loss).unwrap();
            adam_step(&mut ps, &grads.params, &mut state, 1e-2, false).unwrap();
        }
        (trace, ps)
    };
    let (a, pa) = run();
    let (b, pb) = run();
    assert_eq!(a, b);
    assert_eq!(pa, pb);
}

/// The same batch on one worker thread and on four gives identical bits.
#[test]
fn thread_count_does_not_change_results() {
    let rows = 2048;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut rand_t = |shape: Vec<usize>| {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    };
    let mut ps = ParameterSet::new();
    ps.insert("wx", ParamKind::Weight, rand_t(vec![3, 32]));
    ps.insert("wh", ParamKind::Weight, rand_t(vec![8, 32]));
    ps.insert("b", ParamKind::Bias, rand_t(vec![32]));
    let inputs = [("x", rand_t(vec![rows, 3])), ("h", rand_t(vec![rows, 8])), ("c", rand_t(vec![rows, 8]))];
    let g = lstm_graph(rows);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let ev = g.forward(&ps, &inputs).unwrap();
            let grads = ev.backward(&ps, g.output("loss").unwrap()).unwrap();
            (ev.output("loss").unwrap().item().to_bits(), grads.params, grads.inputs)
        })
    };
    assert_eq!(run(1), run(4));
}

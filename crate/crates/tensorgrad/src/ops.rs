//! Forward and adjoint kernels for every primitive.
//!
//! Layout conventions: feature maps are `[channels, rows, width]`, recurrent
//! state is `[rows, units]`. Kernels of height one never read across rows.

use crate::exec::for_each_chunk;
use crate::tensor::Tensor;

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// ---------------------------------------------------------------------------
// Row convolution: kernel height 1, valid padding.

pub fn conv_row(x: &Tensor, kernel: &Tensor, bias: Option<&Tensor>) -> Tensor {
    let (cin, rows, width) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, kw) = (kernel.shape()[0], kernel.shape()[2]);
    let wo = width - kw + 1;
    let xd = x.data();
    let kd = kernel.data();
    let bd = bias.map(|b| b.data());
    let mut out = Tensor::zeros(vec![cout, rows, wo]);
    for_each_chunk(out.data_mut(), wo, wo * cin * kw, |idx, chunk| {
        let co = idx / rows;
        let r = idx % rows;
        let b = bd.map_or(0.0, |b| b[co]);
        for (j, o) in chunk.iter_mut().enumerate() {
            let mut acc = b;
            for ci in 0..cin {
                let xrow = &xd[(ci * rows + r) * width + j..];
                let krow = &kd[(co * cin + ci) * kw..(co * cin + ci + 1) * kw];
                for (k, kv) in krow.iter().enumerate() {
                    acc += kv * xrow[k];
                }
            }
            *o = acc;
        }
    });
    out
}

pub fn conv_row_backward(
    x: &Tensor,
    kernel: &Tensor,
    has_bias: bool,
    grad: &Tensor,
) -> (Tensor, Tensor, Option<Tensor>) {
    let (cin, rows, width) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, kw) = (kernel.shape()[0], kernel.shape()[2]);
    let wo = width - kw + 1;
    let xd = x.data();
    let kd = kernel.data();
    let gd = grad.data();

    let mut dx = Tensor::zeros(x.shape().to_vec());
    for_each_chunk(dx.data_mut(), width, wo * cout * kw, |idx, chunk| {
        let ci = idx / rows;
        let r = idx % rows;
        for co in 0..cout {
            let grow = &gd[(co * rows + r) * wo..(co * rows + r + 1) * wo];
            let krow = &kd[(co * cin + ci) * kw..(co * cin + ci + 1) * kw];
            for (j, g) in grow.iter().enumerate() {
                if *g == 0.0 {
                    continue;
                }
                for (k, kv) in krow.iter().enumerate() {
                    chunk[j + k] += g * kv;
                }
            }
        }
    });

    let mut dk = Tensor::zeros(kernel.shape().to_vec());
    for_each_chunk(dk.data_mut(), kw, rows * wo * kw, |idx, chunk| {
        let co = idx / cin;
        let ci = idx % cin;
        for r in 0..rows {
            let grow = &gd[(co * rows + r) * wo..(co * rows + r + 1) * wo];
            let xrow = &xd[(ci * rows + r) * width..(ci * rows + r + 1) * width];
            for (j, g) in grow.iter().enumerate() {
                if *g == 0.0 {
                    continue;
                }
                for (k, d) in chunk.iter_mut().enumerate() {
                    *d += g * xrow[j + k];
                }
            }
        }
    });

    let db = has_bias.then(|| {
        let mut db = Tensor::zeros(vec![cout]);
        for (co, d) in db.data_mut().iter_mut().enumerate() {
            *d = gd[co * rows * wo..(co + 1) * rows * wo].iter().sum();
        }
        db
    });
    (dx, dk, db)
}

// ---------------------------------------------------------------------------
// Elementwise.

pub fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(a.shape().to_vec(), a.data().iter().map(|&v| f(v)).collect())
}

pub fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
}

pub fn zip3(a: &Tensor, b: &Tensor, c: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Tensor {
    Tensor::new(
        a.shape().to_vec(),
        a.data()
            .iter()
            .zip(b.data())
            .zip(c.data())
            .map(|((&x, &y), &z)| f(x, y, z))
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// Matrix multiply [p, q] x [q, r].

pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (p, q) = (a.shape()[0], a.shape()[1]);
    let r = b.shape()[1];
    let ad = a.data();
    let bd = b.data();
    let mut out = Tensor::zeros(vec![p, r]);
    for_each_chunk(out.data_mut(), r, q * r, |i, row| {
        for k in 0..q {
            let av = ad[i * q + k];
            if av == 0.0 {
                continue;
            }
            for (o, bv) in row.iter_mut().zip(&bd[k * r..(k + 1) * r]) {
                *o += av * bv;
            }
        }
    });
    out
}

pub fn matmul_backward(a: &Tensor, b: &Tensor, grad: &Tensor) -> (Tensor, Tensor) {
    let (p, q) = (a.shape()[0], a.shape()[1]);
    let r = b.shape()[1];
    let ad = a.data();
    let bd = b.data();
    let gd = grad.data();
    let mut da = Tensor::zeros(vec![p, q]);
    for_each_chunk(da.data_mut(), q, q * r, |i, row| {
        let grow = &gd[i * r..(i + 1) * r];
        for (k, d) in row.iter_mut().enumerate() {
            *d = grow.iter().zip(&bd[k * r..(k + 1) * r]).map(|(g, bv)| g * bv).sum();
        }
    });
    let mut db = Tensor::zeros(vec![q, r]);
    for_each_chunk(db.data_mut(), r, p * r, |k, row| {
        for i in 0..p {
            let av = ad[i * q + k];
            if av == 0.0 {
                continue;
            }
            for (d, g) in row.iter_mut().zip(&gd[i * r..(i + 1) * r]) {
                *d += av * g;
            }
        }
    });
    (da, db)
}

// ---------------------------------------------------------------------------
// Concatenation along axis 0.

pub fn concat0(parts: &[&Tensor]) -> Tensor {
    let mut shape = parts[0].shape().to_vec();
    shape[0] = parts.iter().map(|t| t.shape()[0]).sum();
    let mut data = Vec::with_capacity(shape.iter().product());
    for p in parts {
        data.extend_from_slice(p.data());
    }
    Tensor::new(shape, data)
}

pub fn concat0_backward(parts: &[&Tensor], grad: &Tensor) -> Vec<Tensor> {
    let mut offset = 0;
    parts
        .iter()
        .map(|p| {
            let n = p.len();
            let g = Tensor::new(p.shape().to_vec(), grad.data()[offset..offset + n].to_vec());
            offset += n;
            g
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Row-wise softmax over [bias, scores...]: scores [B, m] -> [B, m + 1].

pub fn softmax_bias(scores: &Tensor, bias: f64) -> Tensor {
    let (b, m) = (scores.shape()[0], scores.shape()[1]);
    let sd = scores.data();
    let mut out = Tensor::zeros(vec![b, m + 1]);
    for (row, o) in out.data_mut().chunks_mut(m + 1).enumerate() {
        let s = &sd[row * m..(row + 1) * m];
        let max = s.iter().copied().fold(bias, f64::max);
        o[0] = (bias - max).exp();
        for (oj, sj) in o[1..].iter_mut().zip(s) {
            *oj = (sj - max).exp();
        }
        let total: f64 = o.iter().sum();
        for v in o.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Returns (d scores, d bias).
pub fn softmax_bias_backward(out: &Tensor, grad: &Tensor) -> (Tensor, f64) {
    let (b, m1) = (out.shape()[0], out.shape()[1]);
    let m = m1 - 1;
    let od = out.data();
    let gd = grad.data();
    let mut ds = Tensor::zeros(vec![b, m]);
    let mut dbias = 0.0;
    for row in 0..b {
        let y = &od[row * m1..(row + 1) * m1];
        let g = &gd[row * m1..(row + 1) * m1];
        let dot: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
        dbias += y[0] * (g[0] - dot);
        for j in 0..m {
            ds.data_mut()[row * m + j] = y[j + 1] * (g[j + 1] - dot);
        }
    }
    (ds, dbias)
}

// ---------------------------------------------------------------------------
// Basic recurrent cell: h' = tanh(b + x Wx + h Wh).

pub fn rnn_cell(x: &Tensor, h: &Tensor, wx: &Tensor, wh: &Tensor, b: &Tensor) -> Tensor {
    let (rows, f) = (x.shape()[0], x.shape()[1]);
    let hidden = h.shape()[1];
    let (xd, hd, wxd, whd, bd) = (x.data(), h.data(), wx.data(), wh.data(), b.data());
    let mut out = Tensor::zeros(vec![rows, hidden]);
    for_each_chunk(out.data_mut(), hidden, hidden * (f + hidden), |r, o| {
        o.copy_from_slice(bd);
        accumulate_row(o, &xd[r * f..(r + 1) * f], wxd);
        accumulate_row(o, &hd[r * hidden..(r + 1) * hidden], whd);
        for v in o.iter_mut() {
            *v = v.tanh();
        }
    });
    out
}

/// Returns (dx, dh, dWx, dWh, db).
pub fn rnn_cell_backward(
    x: &Tensor,
    h: &Tensor,
    wx: &Tensor,
    wh: &Tensor,
    out: &Tensor,
    grad: &Tensor,
) -> [Tensor; 5] {
    let hidden = h.shape()[1];
    let dz = zip(grad, out, |g, o| g * (1.0 - o * o));
    let (dx, dh, dwx, dwh, db) = recurrent_linear_backward(x, h, wx, wh, &dz, hidden);
    [dx, dh, dwx, dwh, db]
}

// ---------------------------------------------------------------------------
// LSTM cell. Gate layout along the 4H axis: input, forget, output, candidate.
// Output is [rows, 2H] holding (h', c').

pub fn lstm_cell(
    x: &Tensor,
    h: &Tensor,
    c: &Tensor,
    wx: &Tensor,
    wh: &Tensor,
    b: &Tensor,
) -> Tensor {
    let (rows, f) = (x.shape()[0], x.shape()[1]);
    let hidden = h.shape()[1];
    let (xd, hd, cd) = (x.data(), h.data(), c.data());
    let (wxd, whd, bd) = (wx.data(), wh.data(), b.data());
    let mut out = Tensor::zeros(vec![rows, 2 * hidden]);
    for_each_chunk(out.data_mut(), 2 * hidden, 4 * hidden * (f + hidden), |r, o| {
        let z = lstm_preactivation(r, f, hidden, xd, hd, wxd, whd, bd);
        let crow = &cd[r * hidden..(r + 1) * hidden];
        let (ho, co) = o.split_at_mut(hidden);
        for u in 0..hidden {
            let i = sigmoid(z[u]);
            let fg = sigmoid(z[hidden + u]);
            let og = sigmoid(z[2 * hidden + u]);
            let g = z[3 * hidden + u].tanh();
            let cn = fg * crow[u] + i * g;
            co[u] = cn;
            ho[u] = og * cn.tanh();
        }
    });
    out
}

#[allow(clippy::too_many_arguments)]
fn lstm_preactivation(
    r: usize,
    f: usize,
    hidden: usize,
    xd: &[f64],
    hd: &[f64],
    wxd: &[f64],
    whd: &[f64],
    bd: &[f64],
) -> Vec<f64> {
    let mut z = bd.to_vec();
    accumulate_row(&mut z, &xd[r * f..(r + 1) * f], wxd);
    accumulate_row(&mut z, &hd[r * hidden..(r + 1) * hidden], whd);
    z
}

/// Returns (dx, dh, dc, dWx, dWh, db).
pub fn lstm_cell_backward(
    x: &Tensor,
    h: &Tensor,
    c: &Tensor,
    wx: &Tensor,
    wh: &Tensor,
    b: &Tensor,
    out: &Tensor,
    grad: &Tensor,
) -> [Tensor; 6] {
    let (rows, f) = (x.shape()[0], x.shape()[1]);
    let hidden = h.shape()[1];
    let (xd, hd, cd) = (x.data(), h.data(), c.data());
    let (wxd, whd, bd) = (wx.data(), wh.data(), b.data());
    let od = out.data();
    let gd = grad.data();

    // dz rows carry 4H gate pre-activation adjoints followed by H entries of dc.
    let stride = 5 * hidden;
    let mut scratch = Tensor::zeros(vec![rows, stride]);
    for_each_chunk(scratch.data_mut(), stride, 4 * hidden * (f + hidden), |r, s| {
        let z = lstm_preactivation(r, f, hidden, xd, hd, wxd, whd, bd);
        let crow = &cd[r * hidden..(r + 1) * hidden];
        let cn = &od[r * 2 * hidden + hidden..(r + 1) * 2 * hidden];
        let dh_out = &gd[r * 2 * hidden..r * 2 * hidden + hidden];
        let dc_out = &gd[r * 2 * hidden + hidden..(r + 1) * 2 * hidden];
        let (dz, dc_prev) = s.split_at_mut(4 * hidden);
        for u in 0..hidden {
            let i = sigmoid(z[u]);
            let fg = sigmoid(z[hidden + u]);
            let og = sigmoid(z[2 * hidden + u]);
            let g = z[3 * hidden + u].tanh();
            let tc = cn[u].tanh();
            let d_o = dh_out[u] * tc;
            let dct = dc_out[u] + dh_out[u] * og * (1.0 - tc * tc);
            dz[u] = dct * g * i * (1.0 - i);
            dz[hidden + u] = dct * crow[u] * fg * (1.0 - fg);
            dz[2 * hidden + u] = d_o * og * (1.0 - og);
            dz[3 * hidden + u] = dct * i * (1.0 - g * g);
            dc_prev[u] = dct * fg;
        }
    });
    let sd = scratch.data();
    let mut dz = Tensor::zeros(vec![rows, 4 * hidden]);
    let mut dc = Tensor::zeros(vec![rows, hidden]);
    for r in 0..rows {
        dz.data_mut()[r * 4 * hidden..(r + 1) * 4 * hidden]
            .copy_from_slice(&sd[r * stride..r * stride + 4 * hidden]);
        dc.data_mut()[r * hidden..(r + 1) * hidden]
            .copy_from_slice(&sd[r * stride + 4 * hidden..(r + 1) * stride]);
    }
    let (dx, dh, dwx, dwh, db) = recurrent_linear_backward(x, h, wx, wh, &dz, 4 * hidden);
    [dx, dh, dc, dwx, dwh, db]
}

/// Adjoints of `z = b + x Wx + h Wh` given `dz` of width `width`.
fn recurrent_linear_backward(
    x: &Tensor,
    h: &Tensor,
    wx: &Tensor,
    wh: &Tensor,
    dz: &Tensor,
    width: usize,
) -> (Tensor, Tensor, Tensor, Tensor, Tensor) {
    let rows = x.shape()[0];
    let dzd = dz.data();
    let (dx, dwx) = linear_backward(x, wx, dzd, rows, width);
    let (dh, dwh) = linear_backward(h, wh, dzd, rows, width);
    let mut db = Tensor::zeros(vec![width]);
    for r in 0..rows {
        for (d, g) in db.data_mut().iter_mut().zip(&dzd[r * width..(r + 1) * width]) {
            *d += g;
        }
    }
    (dx, dh, dwx, dwh, db)
}

fn linear_backward(
    input: &Tensor,
    weight: &Tensor,
    dzd: &[f64],
    rows: usize,
    width: usize,
) -> (Tensor, Tensor) {
    let k = input.shape()[1];
    let id = input.data();
    let wd = weight.data();
    let mut dinput = Tensor::zeros(vec![rows, k]);
    for_each_chunk(dinput.data_mut(), k, k * width, |r, row| {
        let g = &dzd[r * width..(r + 1) * width];
        for (j, d) in row.iter_mut().enumerate() {
            *d = g.iter().zip(&wd[j * width..(j + 1) * width]).map(|(a, b)| a * b).sum();
        }
    });
    let mut dweight = Tensor::zeros(vec![k, width]);
    for_each_chunk(dweight.data_mut(), width, rows * width, |j, row| {
        for r in 0..rows {
            let v = id[r * k + j];
            if v == 0.0 {
                continue;
            }
            for (d, g) in row.iter_mut().zip(&dzd[r * width..(r + 1) * width]) {
                *d += v * g;
            }
        }
    });
    (dinput, dweight)
}

/// `out += input_row · W` where `W` is `[input_row.len(), out.len()]`.
fn accumulate_row(out: &mut [f64], input_row: &[f64], w: &[f64]) {
    let width = out.len();
    for (j, v) in input_row.iter().enumerate() {
        if *v == 0.0 {
            continue;
        }
        for (o, wv) in out.iter_mut().zip(&w[j * width..(j + 1) * width]) {
            *o += v * wv;
        }
    }
}

// ---------------------------------------------------------------------------
// Reductions and reshaping.

pub fn mean_batch(a: &Tensor) -> Tensor {
    let b = a.shape()[0];
    let inner: Vec<usize> = a.shape()[1..].to_vec();
    let n: usize = inner.iter().product();
    let mut out = Tensor::zeros(inner);
    for row in a.data().chunks(n) {
        for (o, v) in out.data_mut().iter_mut().zip(row) {
            *o += v;
        }
    }
    for o in out.data_mut() {
        *o /= b as f64;
    }
    out
}

pub fn mean_batch_backward(shape: &[usize], grad: &Tensor) -> Tensor {
    let b = shape[0];
    let mut data = Vec::with_capacity(shape.iter().product());
    for _ in 0..b {
        data.extend(grad.data().iter().map(|g| g / b as f64));
    }
    Tensor::new(shape.to_vec(), data)
}

pub fn sum_last(a: &Tensor) -> Tensor {
    let k = *a.shape().last().unwrap();
    let shape = a.shape()[..a.shape().len() - 1].to_vec();
    Tensor::new(shape, a.data().chunks(k).map(|c| c.iter().sum()).collect())
}

pub fn sum_last_backward(shape: &[usize], grad: &Tensor) -> Tensor {
    let k = *shape.last().unwrap();
    let mut data = Vec::with_capacity(shape.iter().product());
    for g in grad.data() {
        data.extend(std::iter::repeat_n(*g, k));
    }
    Tensor::new(shape.to_vec(), data)
}

pub fn columns(a: &Tensor, start: usize, end: usize) -> Tensor {
    let (b, k) = (a.shape()[0], a.shape()[1]);
    let w = end - start;
    let mut data = Vec::with_capacity(b * w);
    for row in a.data().chunks(k) {
        data.extend_from_slice(&row[start..end]);
    }
    Tensor::new(vec![b, w], data)
}

pub fn columns_backward(shape: &[usize], start: usize, grad: &Tensor) -> Tensor {
    let (b, k) = (shape[0], shape[1]);
    let w = grad.shape()[1];
    let mut out = Tensor::zeros(vec![b, k]);
    for r in 0..b {
        out.data_mut()[r * k + start..r * k + start + w]
            .copy_from_slice(&grad.data()[r * w..(r + 1) * w]);
    }
    out
}

pub fn row_scale(a: &Tensor, s: &Tensor) -> Tensor {
    let k = a.shape()[1];
    let mut out = a.clone();
    for (row, sv) in out.data_mut().chunks_mut(k).zip(s.data()) {
        for v in row {
            *v *= sv;
        }
    }
    out
}

pub fn row_scale_backward(a: &Tensor, s: &Tensor, grad: &Tensor) -> (Tensor, Tensor) {
    let k = a.shape()[1];
    let da = row_scale(grad, s);
    let ds = Tensor::new(
        s.shape().to_vec(),
        a.data()
            .chunks(k)
            .zip(grad.data().chunks(k))
            .map(|(ar, gr)| ar.iter().zip(gr).map(|(x, y)| x * y).sum())
            .collect(),
    );
    (da, ds)
}

/// [C, R, W] at column `t` -> [R, C].
pub fn time_slice(x: &Tensor, t: usize) -> Tensor {
    let (c, rows, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let xd = x.data();
    let mut out = Tensor::zeros(vec![rows, c]);
    for r in 0..rows {
        for ci in 0..c {
            out.data_mut()[r * c + ci] = xd[(ci * rows + r) * w + t];
        }
    }
    out
}

pub fn time_slice_backward(shape: &[usize], t: usize, grad: &Tensor) -> Tensor {
    let (c, rows, w) = (shape[0], shape[1], shape[2]);
    let mut out = Tensor::zeros(shape.to_vec());
    for r in 0..rows {
        for ci in 0..c {
            out.data_mut()[(ci * rows + r) * w + t] = grad.data()[r * c + ci];
        }
    }
    out
}

/// [R, H] -> [H, R, 1].
pub fn feature_map(h: &Tensor) -> Tensor {
    let (rows, units) = (h.shape()[0], h.shape()[1]);
    let mut out = Tensor::zeros(vec![units, rows, 1]);
    for r in 0..rows {
        for u in 0..units {
            out.data_mut()[u * rows + r] = h.data()[r * units + u];
        }
    }
    out
}

pub fn feature_map_backward(grad: &Tensor) -> Tensor {
    let (units, rows) = (grad.shape()[0], grad.shape()[1]);
    let mut out = Tensor::zeros(vec![rows, units]);
    for r in 0..rows {
        for u in 0..units {
            out.data_mut()[r * units + u] = grad.data()[u * rows + r];
        }
    }
    out
}

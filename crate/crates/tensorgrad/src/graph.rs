use std::collections::{BTreeMap, HashMap};

use crate::error::{GradError, Result};
use crate::ops;
use crate::param::ParameterSet;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Input { name: String, tracked: bool },
    Param { name: String },
    Const(Tensor),
    ConvRow { has_bias: bool },
    Relu,
    Abs,
    Ln,
    Add,
    Sub,
    Mul,
    Div,
    Scale(f64),
    Offset(f64),
    MatMul,
    Concat,
    SoftmaxBias,
    RnnCell,
    LstmCell,
    MeanBatch,
    SumLast,
    Sum,
    SumSquares,
    Reshape,
    Columns { start: usize, end: usize },
    RowScale,
    TimeSlice { t: usize },
    FeatureMap,
}

impl Op {
    fn kind(&self) -> &'static str {
        match self {
            Op::Input { .. } => "input",
            Op::Param { .. } => "param",
            Op::Const(_) => "const",
            Op::ConvRow { .. } => "conv_row",
            Op::Relu => "relu",
            Op::Abs => "abs",
            Op::Ln => "ln",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Scale(_) => "scale",
            Op::Offset(_) => "offset",
            Op::MatMul => "matmul",
            Op::Concat => "concat",
            Op::SoftmaxBias => "softmax_bias",
            Op::RnnCell => "rnn_cell",
            Op::LstmCell => "lstm_cell",
            Op::MeanBatch => "mean_batch",
            Op::SumLast => "sum_last",
            Op::Sum => "sum",
            Op::SumSquares => "sum_squares",
            Op::Reshape => "reshape",
            Op::Columns { .. } => "columns",
            Op::RowScale => "row_scale",
            Op::TimeSlice { .. } => "time_slice",
            Op::FeatureMap => "feature_map",
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) inputs: Vec<NodeId>,
    pub(crate) shape: Vec<usize>,
    needs_grad: bool,
}

/// A static computation graph.
///
/// Nodes are appended in topological order by the builder methods, which
/// also infer and check shapes. Parameters are referenced by name and
/// supplied at evaluation time, so one graph can be evaluated concurrently
/// against the same [`ParameterSet`].
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    inputs: BTreeMap<String, NodeId>,
    params: BTreeMap<String, NodeId>,
    outputs: BTreeMap<String, NodeId>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, node: NodeId) -> &[usize] {
        &self.nodes[node.0].shape
    }

    /// Names of parameters referenced by this graph, in name order.
    pub fn parameter_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn input_names(&self) -> impl Iterator<Item = &str> {
        self.inputs.keys().map(String::as_str)
    }

    pub fn output(&self, name: &str) -> Option<NodeId> {
        self.outputs.get(name).copied()
    }

    /// Registers `node` under `name` for lookup after evaluation.
    pub fn set_output(&mut self, name: impl Into<String>, node: NodeId) {
        self.outputs.insert(name.into(), node);
    }

    fn label(&self, node: NodeId) -> String {
        let n = &self.nodes[node.0];
        match &n.op {
            Op::Input { name, .. } => format!("input `{name}`"),
            Op::Param { name } => format!("param `{name}`"),
            op => format!("node {} ({})", node.0, op.kind()),
        }
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, shape: Vec<usize>) -> NodeId {
        let needs_grad = match &op {
            Op::Param { .. } => true,
            Op::Input { tracked, .. } => *tracked,
            Op::Const(_) => false,
            _ => inputs.iter().any(|i| self.nodes[i.0].needs_grad),
        };
        self.nodes.push(Node {
            op,
            inputs,
            shape,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn invalid(&self, what: &str, reason: impl Into<String>) -> GradError {
        GradError::InvalidOp {
            node: format!("node {} ({what})", self.nodes.len()),
            reason: reason.into(),
        }
    }

    fn expect_shape(&self, node: NodeId, expected: &[usize]) -> Result<()> {
        let actual = self.shape(node);
        if actual != expected {
            return Err(GradError::Shape {
                node: self.label(node),
                expected: expected.to_vec(),
                actual: actual.to_vec(),
            });
        }
        Ok(())
    }

    fn expect_rank(&self, node: NodeId, rank: usize, what: &str) -> Result<()> {
        if self.shape(node).len() != rank {
            return Err(self.invalid(
                what,
                format!("{} must have rank {rank}, has shape {:?}", self.label(node), self.shape(node)),
            ));
        }
        Ok(())
    }

    // -- leaves -------------------------------------------------------------

    /// A named placeholder whose gradient is reported by `backward`.
    pub fn input(&mut self, name: &str, shape: &[usize]) -> NodeId {
        self.leaf_input(name, shape, true)
    }

    /// A named placeholder treated as data: no gradient flows into it.
    pub fn data_input(&mut self, name: &str, shape: &[usize]) -> NodeId {
        self.leaf_input(name, shape, false)
    }

    fn leaf_input(&mut self, name: &str, shape: &[usize], tracked: bool) -> NodeId {
        if let Some(&id) = self.inputs.get(name) {
            return id;
        }
        let id = self.push(
            Op::Input {
                name: name.to_string(),
                tracked,
            },
            Vec::new(),
            shape.to_vec(),
        );
        self.inputs.insert(name.to_string(), id);
        id
    }

    /// Declares (or re-uses) the parameter `name` with the given shape.
    pub fn param(&mut self, name: &str, shape: &[usize]) -> Result<NodeId> {
        if let Some(&id) = self.params.get(name) {
            self.expect_shape(id, shape)?;
            return Ok(id);
        }
        let id = self.push(Op::Param { name: name.to_string() }, Vec::new(), shape.to_vec());
        self.params.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        let shape = value.shape().to_vec();
        self.push(Op::Const(value), Vec::new(), shape)
    }

    // -- operations ----------------------------------------------------------

    /// Height-1 convolution with valid padding: `x [Cin, R, W]`,
    /// `kernel [Cout, Cin, K]`, optional `bias [Cout]` -> `[Cout, R, W-K+1]`.
    pub fn conv_row(&mut self, x: NodeId, kernel: NodeId, bias: Option<NodeId>) -> Result<NodeId> {
        self.expect_rank(x, 3, "conv_row")?;
        self.expect_rank(kernel, 3, "conv_row")?;
        let (cin, rows, width) = (self.shape(x)[0], self.shape(x)[1], self.shape(x)[2]);
        let (cout, kcin, kw) = (self.shape(kernel)[0], self.shape(kernel)[1], self.shape(kernel)[2]);
        if kcin != cin {
            return Err(GradError::Shape {
                node: self.label(kernel),
                expected: vec![cout, cin, kw],
                actual: self.shape(kernel).to_vec(),
            });
        }
        if kw == 0 || kw > width {
            return Err(self.invalid("conv_row", format!("kernel width {kw} does not fit input width {width}")));
        }
        let mut inputs = vec![x, kernel];
        if let Some(b) = bias {
            self.expect_shape(b, &[cout])?;
            inputs.push(b);
        }
        Ok(self.push(
            Op::ConvRow { has_bias: bias.is_some() },
            inputs,
            vec![cout, rows, width - kw + 1],
        ))
    }

    fn unary(&mut self, op: Op, a: NodeId) -> NodeId {
        let shape = self.shape(a).to_vec();
        self.push(op, vec![a], shape)
    }

    fn binary(&mut self, op: Op, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.shape(a).to_vec();
        self.expect_shape(b, &shape)?;
        Ok(self.push(op, vec![a, b], shape))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(Op::Relu, a)
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        self.unary(Op::Abs, a)
    }

    /// Natural logarithm; evaluation fails on non-positive input.
    pub fn ln(&mut self, a: NodeId) -> NodeId {
        self.unary(Op::Ln, a)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Op::Add, a, b)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Op::Sub, a, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Op::Mul, a, b)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Op::Div, a, b)
    }

    /// `a * factor`.
    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        self.unary(Op::Scale(factor), a)
    }

    /// `a + shift`.
    pub fn offset(&mut self, a: NodeId, shift: f64) -> NodeId {
        self.unary(Op::Offset(shift), a)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.expect_rank(a, 2, "matmul")?;
        self.expect_rank(b, 2, "matmul")?;
        let (p, q) = (self.shape(a)[0], self.shape(a)[1]);
        let r = self.shape(b)[1];
        self.expect_shape(b, &[q, r])?;
        Ok(self.push(Op::MatMul, vec![a, b], vec![p, r]))
    }

    /// Concatenation along the leading (feature) axis.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = *parts
            .first()
            .ok_or_else(|| self.invalid("concat", "no inputs"))?;
        let tail = self.shape(first)[1..].to_vec();
        let mut lead = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.is_empty() || s[1..] != tail[..] {
                let mut expected = vec![s.first().copied().unwrap_or(0)];
                expected.extend_from_slice(&tail);
                return Err(GradError::Shape {
                    node: self.label(p),
                    expected,
                    actual: s.to_vec(),
                });
            }
            lead += s[0];
        }
        let mut shape = vec![lead];
        shape.extend(tail);
        Ok(self.push(Op::Concat, parts.to_vec(), shape))
    }

    /// Row-wise softmax of `[bias, scores[b, 0], .., scores[b, m-1]]`:
    /// `scores [B, m]`, scalar `bias` -> `[B, m+1]`.
    pub fn softmax_with_bias(&mut self, scores: NodeId, bias: NodeId) -> Result<NodeId> {
        self.expect_rank(scores, 2, "softmax_with_bias")?;
        if self.nodes[bias.0].shape.iter().product::<usize>() != 1 {
            return Err(GradError::Shape {
                node: self.label(bias),
                expected: vec![],
                actual: self.shape(bias).to_vec(),
            });
        }
        let (b, m) = (self.shape(scores)[0], self.shape(scores)[1]);
        Ok(self.push(Op::SoftmaxBias, vec![scores, bias], vec![b, m + 1]))
    }

    /// `tanh(b + x Wx + h Wh)`: `x [R, F]`, `h [R, H]`, `wx [F, H]`,
    /// `wh [H, H]`, `b [H]` -> `[R, H]`.
    pub fn rnn_cell(&mut self, x: NodeId, h: NodeId, wx: NodeId, wh: NodeId, b: NodeId) -> Result<NodeId> {
        self.expect_rank(x, 2, "rnn_cell")?;
        self.expect_rank(h, 2, "rnn_cell")?;
        let (rows, f) = (self.shape(x)[0], self.shape(x)[1]);
        let hidden = self.shape(h)[1];
        self.expect_shape(h, &[rows, hidden])?;
        self.expect_shape(wx, &[f, hidden])?;
        self.expect_shape(wh, &[hidden, hidden])?;
        self.expect_shape(b, &[hidden])?;
        Ok(self.push(Op::RnnCell, vec![x, h, wx, wh, b], vec![rows, hidden]))
    }

    /// Standard LSTM cell with gates ordered (input, forget, output,
    /// candidate) along the `4H` axis. Returns `[R, 2H]` = `(h', c')`.
    #[allow(clippy::too_many_arguments)]
    pub fn lstm_cell(
        &mut self,
        x: NodeId,
        h: NodeId,
        c: NodeId,
        wx: NodeId,
        wh: NodeId,
        b: NodeId,
    ) -> Result<NodeId> {
        self.expect_rank(x, 2, "lstm_cell")?;
        self.expect_rank(h, 2, "lstm_cell")?;
        let (rows, f) = (self.shape(x)[0], self.shape(x)[1]);
        let hidden = self.shape(h)[1];
        self.expect_shape(h, &[rows, hidden])?;
        self.expect_shape(c, &[rows, hidden])?;
        self.expect_shape(wx, &[f, 4 * hidden])?;
        self.expect_shape(wh, &[hidden, 4 * hidden])?;
        self.expect_shape(b, &[4 * hidden])?;
        Ok(self.push(Op::LstmCell, vec![x, h, c, wx, wh, b], vec![rows, 2 * hidden]))
    }

    /// Mean over the leading (batch) axis.
    pub fn mean_batch(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.shape(a).to_vec();
        if s.is_empty() || s[0] == 0 {
            return Err(self.invalid("mean_batch", format!("needs a non-empty batch axis, got {s:?}")));
        }
        Ok(self.push(Op::MeanBatch, vec![a], s[1..].to_vec()))
    }

    /// Sum over the trailing axis.
    pub fn sum_last(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.shape(a).to_vec();
        if s.is_empty() {
            return Err(self.invalid("sum_last", "scalar input"));
        }
        Ok(self.push(Op::SumLast, vec![a], s[..s.len() - 1].to_vec()))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sum, vec![a], Vec::new())
    }

    pub fn sum_squares(&mut self, a: NodeId) -> NodeId {
        self.push(Op::SumSquares, vec![a], Vec::new())
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let from: usize = self.shape(a).iter().product();
        let to: usize = shape.iter().product();
        if from != to {
            return Err(GradError::Shape {
                node: self.label(a),
                expected: shape.to_vec(),
                actual: self.shape(a).to_vec(),
            });
        }
        Ok(self.push(Op::Reshape, vec![a], shape.to_vec()))
    }

    /// Columns `start..end` of a `[B, k]` matrix.
    pub fn columns(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        self.expect_rank(a, 2, "columns")?;
        let (b, k) = (self.shape(a)[0], self.shape(a)[1]);
        if start >= end || end > k {
            return Err(self.invalid("columns", format!("range {start}..{end} outside {k} columns")));
        }
        Ok(self.push(Op::Columns { start, end }, vec![a], vec![b, end - start]))
    }

    /// Scales row `i` of `a [B, k]` by `s[i]`, `s [B]`.
    pub fn row_scale(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        self.expect_rank(a, 2, "row_scale")?;
        let b = self.shape(a)[0];
        self.expect_shape(s, &[b])?;
        let shape = self.shape(a).to_vec();
        Ok(self.push(Op::RowScale, vec![a, s], shape))
    }

    /// Column `t` of a `[C, R, W]` feature map as an `[R, C]` matrix.
    pub fn time_slice(&mut self, x: NodeId, t: usize) -> Result<NodeId> {
        self.expect_rank(x, 3, "time_slice")?;
        let (c, rows, w) = (self.shape(x)[0], self.shape(x)[1], self.shape(x)[2]);
        if t >= w {
            return Err(self.invalid("time_slice", format!("column {t} outside width {w}")));
        }
        Ok(self.push(Op::TimeSlice { t }, vec![x], vec![rows, c]))
    }

    /// `[R, H]` recurrent state as an `[H, R, 1]` feature map.
    pub fn feature_map(&mut self, h: NodeId) -> Result<NodeId> {
        self.expect_rank(h, 2, "feature_map")?;
        let (rows, units) = (self.shape(h)[0], self.shape(h)[1]);
        Ok(self.push(Op::FeatureMap, vec![h], vec![units, rows, 1]))
    }

    // -- evaluation ------------------------------------------------------------

    /// Evaluates every node. Inputs must match their declared shapes
    /// exactly and every referenced parameter must be present.
    pub fn forward<'g>(&'g self, params: &ParameterSet, inputs: &[(&str, Tensor)]) -> Result<Evaluation<'g>> {
        let mut provided: HashMap<&str, &Tensor> = HashMap::with_capacity(inputs.len());
        for (name, t) in inputs {
            if !self.inputs.contains_key(*name) {
                return Err(GradError::UnknownInput(name.to_string()));
            }
            provided.insert(name, t);
        }
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for (idx, node) in self.nodes.iter().enumerate() {
            let id = NodeId(idx);
            let arg = |i: usize| &values[node.inputs[i].0];
            let value = match &node.op {
                Op::Input { name, .. } => {
                    let t = provided
                        .get(name.as_str())
                        .ok_or_else(|| GradError::MissingInput(name.clone()))?;
                    if t.shape() != node.shape.as_slice() {
                        return Err(GradError::Shape {
                            node: self.label(id),
                            expected: node.shape.clone(),
                            actual: t.shape().to_vec(),
                        });
                    }
                    (*t).clone()
                }
                Op::Param { name } => {
                    let t = params.tensor(name)?;
                    if t.shape() != node.shape.as_slice() {
                        return Err(GradError::Shape {
                            node: self.label(id),
                            expected: node.shape.clone(),
                            actual: t.shape().to_vec(),
                        });
                    }
                    t.clone()
                }
                Op::Const(t) => t.clone(),
                Op::ConvRow { has_bias } => {
                    ops::conv_row(arg(0), arg(1), has_bias.then(|| arg(2)))
                }
                Op::Relu => ops::map(arg(0), |v| v.max(0.0)),
                Op::Abs => ops::map(arg(0), f64::abs),
                Op::Ln => {
                    let a = arg(0);
                    if a.data().iter().any(|&v| v <= 0.0 || !v.is_finite()) {
                        return Err(GradError::NonFinite { node: self.label(id) });
                    }
                    ops::map(a, f64::ln)
                }
                Op::Add => ops::zip(arg(0), arg(1), |a, b| a + b),
                Op::Sub => ops::zip(arg(0), arg(1), |a, b| a - b),
                Op::Mul => ops::zip(arg(0), arg(1), |a, b| a * b),
                Op::Div => ops::zip(arg(0), arg(1), |a, b| a / b),
                Op::Scale(s) => ops::map(arg(0), |v| v * s),
                Op::Offset(s) => ops::map(arg(0), |v| v + s),
                Op::MatMul => ops::matmul(arg(0), arg(1)),
                Op::Concat => {
                    let parts: Vec<&Tensor> = node.inputs.iter().map(|i| &values[i.0]).collect();
                    ops::concat0(&parts)
                }
                Op::SoftmaxBias => ops::softmax_bias(arg(0), arg(1).data()[0]),
                Op::RnnCell => ops::rnn_cell(arg(0), arg(1), arg(2), arg(3), arg(4)),
                Op::LstmCell => ops::lstm_cell(arg(0), arg(1), arg(2), arg(3), arg(4), arg(5)),
                Op::MeanBatch => ops::mean_batch(arg(0)),
                Op::SumLast => ops::sum_last(arg(0)),
                Op::Sum => Tensor::scalar(arg(0).data().iter().sum()),
                Op::SumSquares => Tensor::scalar(arg(0).sum_squares()),
                Op::Reshape => arg(0).clone().reshaped(node.shape.clone()),
                Op::Columns { start, end } => ops::columns(arg(0), *start, *end),
                Op::RowScale => ops::row_scale(arg(0), arg(1)),
                Op::TimeSlice { t } => ops::time_slice(arg(0), *t),
                Op::FeatureMap => ops::feature_map(arg(0)),
            };
            if !value.is_finite() {
                return Err(GradError::NonFinite { node: self.label(id) });
            }
            debug_assert_eq!(value.shape(), node.shape.as_slice(), "{}", self.label(id));
            values.push(value);
        }
        Ok(Evaluation { graph: self, values })
    }
}

/// Node values from one forward pass.
#[derive(Debug, Clone)]
pub struct Evaluation<'g> {
    graph: &'g Graph,
    values: Vec<Tensor>,
}

/// Gradients of a scalar with respect to every parameter (zero where the
/// scalar does not depend on it) and every tracked input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: BTreeMap<String, Tensor>,
    pub inputs: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }
}

impl Evaluation<'_> {
    pub fn value(&self, node: NodeId) -> &Tensor {
        &self.values[node.0]
    }

    pub fn output(&self, name: &str) -> Option<&Tensor> {
        self.graph.output(name).map(|id| &self.values[id.0])
    }

    /// Reverse sweep from the scalar `target`.
    ///
    /// `params` must be the set used for the forward pass; every parameter
    /// in it receives a gradient entry.
    pub fn backward(&self, params: &ParameterSet, target: NodeId) -> Result<Gradients> {
        let g = self.graph;
        let tshape = g.shape(target);
        if tshape.iter().product::<usize>() != 1 {
            return Err(GradError::NotScalar {
                node: g.label(target),
                shape: tshape.to_vec(),
            });
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; target.0 + 1];
        adj[target.0] = Some(Tensor::full(tshape.to_vec(), 1.0));

        let mut grads = Gradients {
            params: params
                .iter()
                .map(|(name, p)| (name.to_string(), Tensor::zeros(p.value.shape().to_vec())))
                .collect(),
            inputs: BTreeMap::new(),
        };

        for idx in (0..=target.0).rev() {
            let Some(grad) = adj[idx].take() else { continue };
            let node = &g.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Param { name } => {
                    if let Some(slot) = grads.params.get_mut(name) {
                        slot.add_assign(&grad);
                    }
                    continue;
                }
                Op::Input { name, tracked } => {
                    if *tracked {
                        grads.inputs.insert(name.clone(), grad);
                    }
                    continue;
                }
                Op::Const(_) => continue,
                _ => {}
            }
            let input_grads = self.node_backward(idx, &grad);
            for (input, ig) in node.inputs.iter().zip(input_grads) {
                let Some(ig) = ig else { continue };
                if !g.nodes[input.0].needs_grad {
                    continue;
                }
                match &mut adj[input.0] {
                    Some(acc) => acc.add_assign(&ig),
                    slot => *slot = Some(ig),
                }
            }
        }
        Ok(grads)
    }

    fn node_backward(&self, idx: usize, grad: &Tensor) -> Vec<Option<Tensor>> {
        let node = &self.graph.nodes[idx];
        let arg = |i: usize| &self.values[node.inputs[i].0];
        let out = &self.values[idx];
        match &node.op {
            Op::Input { .. } | Op::Param { .. } | Op::Const(_) => Vec::new(),
            Op::ConvRow { has_bias } => {
                let (dx, dk, db) = ops::conv_row_backward(arg(0), arg(1), *has_bias, grad);
                vec![Some(dx), Some(dk), db]
            }
            Op::Relu => vec![Some(ops::zip(grad, arg(0), |g, x| if x > 0.0 { g } else { 0.0 }))],
            Op::Abs => vec![Some(ops::zip(grad, arg(0), |g, x| {
                if x > 0.0 {
                    g
                } else if x < 0.0 {
                    -g
                } else {
                    0.0
                }
            }))],
            Op::Ln => vec![Some(ops::zip(grad, arg(0), |g, x| g / x))],
            Op::Add => vec![Some(grad.clone()), Some(grad.clone())],
            Op::Sub => vec![Some(grad.clone()), Some(ops::map(grad, |g| -g))],
            Op::Mul => vec![
                Some(ops::zip(grad, arg(1), |g, b| g * b)),
                Some(ops::zip(grad, arg(0), |g, a| g * a)),
            ],
            Op::Div => vec![
                Some(ops::zip(grad, arg(1), |g, b| g / b)),
                Some(ops::zip3(grad, arg(0), arg(1), |g, a, b| -g * a / (b * b))),
            ],
            Op::Scale(s) => vec![Some(ops::map(grad, |g| g * s))],
            Op::Offset(_) => vec![Some(grad.clone())],
            Op::MatMul => {
                let (da, db) = ops::matmul_backward(arg(0), arg(1), grad);
                vec![Some(da), Some(db)]
            }
            Op::Concat => {
                let parts: Vec<&Tensor> = node.inputs.iter().map(|i| &self.values[i.0]).collect();
                ops::concat0_backward(&parts, grad).into_iter().map(Some).collect()
            }
            Op::SoftmaxBias => {
                let (ds, db) = ops::softmax_bias_backward(out, grad);
                let bias_shape = arg(1).shape().to_vec();
                vec![Some(ds), Some(Tensor::new(bias_shape, vec![db]))]
            }
            Op::RnnCell => ops::rnn_cell_backward(arg(0), arg(1), arg(2), arg(3), out, grad)
                .into_iter()
                .map(Some)
                .collect(),
            Op::LstmCell => {
                ops::lstm_cell_backward(arg(0), arg(1), arg(2), arg(3), arg(4), arg(5), out, grad)
                    .into_iter()
                    .map(Some)
                    .collect()
            }
            Op::MeanBatch => vec![Some(ops::mean_batch_backward(arg(0).shape(), grad))],
            Op::SumLast => vec![Some(ops::sum_last_backward(arg(0).shape(), grad))],
            Op::Sum => vec![Some(Tensor::full(arg(0).shape().to_vec(), grad.item()))],
            Op::SumSquares => {
                let g = grad.item();
                vec![Some(ops::map(arg(0), |x| 2.0 * g * x))]
            }
            Op::Reshape => vec![Some(grad.clone().reshaped(arg(0).shape().to_vec()))],
            Op::Columns { start, .. } => {
                vec![Some(ops::columns_backward(arg(0).shape(), *start, grad))]
            }
            Op::RowScale => {
                let (da, ds) = ops::row_scale_backward(arg(0), arg(1), grad);
                vec![Some(da), Some(ds)]
            }
            Op::TimeSlice { t } => vec![Some(ops::time_slice_backward(arg(0).shape(), *t, grad))],
            Op::FeatureMap => vec![Some(ops::feature_map_backward(grad))],
        }
    }
}

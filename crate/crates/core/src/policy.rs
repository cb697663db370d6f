//! EIIE policy networks: one shared evaluator scores every asset from its own
//! price history and its previous weight; the scores plus a cash bias meet
//! only at the final softmax.
//!
//! A batch of `B` observations of `m` assets is laid out as `B * m` rows,
//! row `b * m + i` holding asset `i` of observation `b`. Every layer acts on
//! rows independently, so the batch costs nothing extra in structure.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tensorgrad::{he_std, truncated_normal, Graph, NodeId, ParamKind, ParameterSet, Tensor};

use crate::accounting::PortfolioVector;
use crate::error::{Error, Result};
use crate::marketdata::{PriceTensor, FEATURES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TopologyKind {
    Cnn,
    BasicRnn,
    Lstm,
}

impl std::str::FromStr for TopologyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(TopologyKind::Cnn),
            "rnn" | "basic_rnn" | "basicrnn" => Ok(TopologyKind::BasicRnn),
            "lstm" => Ok(TopologyKind::Lstm),
            other => Err(Error::Config(format!("unknown topology `{other}`"))),
        }
    }
}

impl std::fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TopologyKind::Cnn => "cnn",
            TopologyKind::BasicRnn => "rnn",
            TopologyKind::Lstm => "lstm",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyTopology {
    pub kind: TopologyKind,
    /// Non-cash asset count.
    pub m: usize,
    /// Lookback window.
    pub n: usize,
    /// Feature maps of the first (1 x `conv_width`) convolution.
    pub conv1_maps: usize,
    pub conv_width: usize,
    /// Feature maps of the window-collapsing convolution.
    pub conv2_maps: usize,
    /// Recurrent hidden units.
    pub hidden: usize,
}

pub const CASH_BIAS: &str = "cash_bias";

impl PolicyTopology {
    pub fn cnn(m: usize, n: usize) -> Self {
        Self { kind: TopologyKind::Cnn, m, n, conv1_maps: 2, conv_width: 3, conv2_maps: 20, hidden: 20 }
    }

    pub fn recurrent(kind: TopologyKind, m: usize, n: usize, hidden: usize) -> Self {
        Self { kind, hidden, ..Self::cnn(m, n) }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.m == 0 {
            return bad("a policy needs at least one non-cash asset".into());
        }
        match self.kind {
            TopologyKind::Cnn => {
                if self.conv_width == 0 || self.conv1_maps == 0 || self.conv2_maps == 0 {
                    return bad("convolution widths and map counts must be positive".into());
                }
                if self.n < self.conv_width + 1 || self.n < 4 {
                    return bad(format!("window {} too short for the convolutional topology", self.n));
                }
            }
            TopologyKind::BasicRnn | TopologyKind::Lstm => {
                if self.n == 0 || self.hidden == 0 {
                    return bad("recurrent topology needs n >= 1 and hidden >= 1".into());
                }
            }
        }
        Ok(())
    }

    /// Features per asset entering the scoring layer, excluding the previous weight.
    fn evaluator_features(&self) -> usize {
        match self.kind {
            TopologyKind::Cnn => self.conv2_maps,
            TopologyKind::BasicRnn | TopologyKind::Lstm => self.hidden,
        }
    }

    /// Parameter names and shapes, with their fan-in for initialization.
    pub fn parameter_shapes(&self) -> Vec<(&'static str, Vec<usize>, ParamKind, usize)> {
        let mut v = Vec::new();
        match self.kind {
            TopologyKind::Cnn => {
                let w2 = self.n - self.conv_width + 1;
                v.push(("conv1.kernel", vec![self.conv1_maps, FEATURES, self.conv_width], ParamKind::Weight, FEATURES * self.conv_width));
                v.push(("conv1.bias", vec![self.conv1_maps], ParamKind::Bias, 0));
                v.push(("conv2.kernel", vec![self.conv2_maps, self.conv1_maps, w2], ParamKind::Weight, self.conv1_maps * w2));
                v.push(("conv2.bias", vec![self.conv2_maps], ParamKind::Bias, 0));
            }
            TopologyKind::BasicRnn => {
                let h = self.hidden;
                v.push(("rnn.input", vec![FEATURES, h], ParamKind::Weight, FEATURES));
                v.push(("rnn.recurrent", vec![h, h], ParamKind::Weight, h));
                v.push(("rnn.bias", vec![h], ParamKind::Bias, 0));
            }
            TopologyKind::Lstm => {
                let h = self.hidden;
                v.push(("lstm.input", vec![FEATURES, 4 * h], ParamKind::Weight, FEATURES));
                v.push(("lstm.recurrent", vec![h, 4 * h], ParamKind::Weight, h));
                v.push(("lstm.bias", vec![4 * h], ParamKind::Bias, 0));
            }
        }
        let k = self.evaluator_features() + 1;
        v.push(("score.kernel", vec![1, k, 1], ParamKind::Weight, k));
        v.push((CASH_BIAS, vec![], ParamKind::Bias, 0));
        v
    }
}

/// Truncated-normal weights with standard deviation `sqrt(2 / fan_in)`, zero
/// cash bias, LSTM forget-gate bias 1.0, and other biases zero except
/// `conv1.bias`, which cancels its kernel on a flat window of ones.
///
/// Inputs sit near 1, so an uncentred first layer fixes the sign of a whole
/// feature map; with two maps the network starts dead about a quarter of
/// the time.
pub fn init_parameters(topology: &PolicyTopology, seed: u64) -> Result<ParameterSet> {
    topology.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = ParameterSet::new();
    for (name, shape, kind, fan_in) in topology.parameter_shapes() {
        let value = match kind {
            ParamKind::Weight => truncated_normal(&shape, he_std(fan_in), &mut rng),
            ParamKind::Bias => {
                let mut t = Tensor::zeros(shape);
                if name == "lstm.bias" {
                    let h = topology.hidden;
                    t.data_mut()[h..2 * h].fill(1.0);
                }
                t
            }
        };
        ps.insert(name, kind, value);
    }
    if let Some(kernel) = ps.get("conv1.kernel").map(|p| p.value.clone()) {
        let per_map = kernel.len() / topology.conv1_maps;
        let centred: Vec<f64> = kernel.data().chunks(per_map).map(|k| -k.iter().sum::<f64>()).collect();
        if let Some(bias) = ps.get_mut("conv1.bias") {
            bias.value.data_mut().copy_from_slice(&centred);
        }
    }
    Ok(ps)
}

/// Nodes produced by [`add_policy`].
#[derive(Debug, Clone, Copy)]
pub struct PolicyNodes {
    /// `[B, m]` voting scores.
    pub scores: NodeId,
    /// `[B, m + 1]` portfolio weights, cash first.
    pub weights: NodeId,
    pub cash_bias: NodeId,
}

/// Appends the policy to `g`. `x` is `[3, B*m, n]`, `w_prev` is the
/// non-cash part of the previous portfolio, `[B, m]`.
pub fn add_policy(g: &mut Graph, topology: &PolicyTopology, batch: usize, x: NodeId, w_prev: NodeId) -> Result<PolicyNodes> {
    topology.validate()?;
    let (m, n) = (topology.m, topology.n);
    let rows = batch * m;
    let p = |g: &mut Graph, name: &str, shape: &[usize]| g.param(name, shape);
    let features = match topology.kind {
        TopologyKind::Cnn => {
            let w2 = n - topology.conv_width + 1;
            let k1 = p(g, "conv1.kernel", &[topology.conv1_maps, FEATURES, topology.conv_width])?;
            let b1 = p(g, "conv1.bias", &[topology.conv1_maps])?;
            let k2 = p(g, "conv2.kernel", &[topology.conv2_maps, topology.conv1_maps, w2])?;
            let b2 = p(g, "conv2.bias", &[topology.conv2_maps])?;
            let h = g.conv_row(x, k1, Some(b1))?;
            let h = g.relu(h);
            let h = g.conv_row(h, k2, Some(b2))?;
            g.relu(h)
        }
        TopologyKind::BasicRnn => {
            let hd = topology.hidden;
            let wx = p(g, "rnn.input", &[FEATURES, hd])?;
            let wh = p(g, "rnn.recurrent", &[hd, hd])?;
            let b = p(g, "rnn.bias", &[hd])?;
            let mut h = g.constant(Tensor::zeros(vec![rows, hd]));
            for t in 0..n {
                let xt = g.time_slice(x, t)?;
                h = g.rnn_cell(xt, h, wx, wh, b)?;
            }
            g.feature_map(h)?
        }
        TopologyKind::Lstm => {
            let hd = topology.hidden;
            let wx = p(g, "lstm.input", &[FEATURES, 4 * hd])?;
            let wh = p(g, "lstm.recurrent", &[hd, 4 * hd])?;
            let b = p(g, "lstm.bias", &[4 * hd])?;
            let mut h = g.constant(Tensor::zeros(vec![rows, hd]));
            let mut c = g.constant(Tensor::zeros(vec![rows, hd]));
            for t in 0..n {
                let xt = g.time_slice(x, t)?;
                let state = g.lstm_cell(xt, h, c, wx, wh, b)?;
                h = g.columns(state, 0, hd)?;
                c = g.columns(state, hd, 2 * hd)?;
            }
            g.feature_map(h)?
        }
    };
    let k = topology.evaluator_features() + 1;
    let w_map = g.reshape(w_prev, &[1, rows, 1])?;
    let stacked = g.concat(&[features, w_map])?;
    let k3 = p(g, "score.kernel", &[1, k, 1])?;
    let scores = g.conv_row(stacked, k3, None)?;
    let scores = g.reshape(scores, &[batch, m])?;
    let cash_bias = p(g, CASH_BIAS, &[])?;
    let weights = g.softmax_with_bias(scores, cash_bias)?;
    Ok(PolicyNodes { scores, weights, cash_bias })
}

/// Stacks per-observation price tensors into the batched `[3, B*m, n]` layout.
pub fn batch_input(tensors: &[&PriceTensor]) -> Tensor {
    let first = tensors[0];
    let (m, n, b) = (first.m, first.n, tensors.len());
    let mut data = Vec::with_capacity(FEATURES * b * m * n);
    for f in 0..FEATURES {
        for x in tensors {
            data.extend_from_slice(&x.values()[f * m * n..(f + 1) * m * n]);
        }
    }
    Tensor::new(vec![FEATURES, b * m, n], data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub weights: PortfolioVector,
    pub scores: Vec<f64>,
    pub cash_bias: f64,
}

/// A topology, its parameters, and a single-observation inference graph.
#[derive(Debug, Clone)]
pub struct Policy {
    pub topology: PolicyTopology,
    pub params: ParameterSet,
    graph: Graph,
    nodes: PolicyNodes,
}

impl Policy {
    pub fn new(topology: PolicyTopology, params: ParameterSet) -> Result<Self> {
        for (name, shape, kind, _) in topology.parameter_shapes() {
            let p = params
                .get(name)
                .ok_or_else(|| Error::Config(format!("parameter `{name}` missing for {} topology", topology.kind)))?;
            if p.value.shape() != shape.as_slice() || p.kind != kind {
                return Err(Error::Config(format!(
                    "parameter `{name}` has shape {:?}, topology needs {shape:?}",
                    p.value.shape()
                )));
            }
        }
        let mut graph = Graph::new();
        let x = graph.input("x", &[FEATURES, topology.m, topology.n]);
        let w = graph.input("w_prev", &[1, topology.m]);
        let nodes = add_policy(&mut graph, &topology, 1, x, w)?;
        graph.set_output("weights", nodes.weights);
        graph.set_output("scores", nodes.scores);
        Ok(Self { topology, params, graph, nodes })
    }

    pub fn initialized(topology: PolicyTopology, seed: u64) -> Result<Self> {
        let params = init_parameters(&topology, seed)?;
        Self::new(topology, params)
    }

    /// The single-observation graph; inputs `x` `[3, m, n]` and `w_prev` `[1, m]`.
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn nodes(&self) -> PolicyNodes {
        self.nodes
    }

    pub fn inputs(&self, x: &PriceTensor, w_prev: &PortfolioVector) -> Result<Vec<(&'static str, Tensor)>> {
        let t = &self.topology;
        if x.m != t.m || x.n != t.n || w_prev.assets() != t.m {
            return Err(Error::Config(format!(
                "policy expects m = {}, n = {}; got price tensor m = {}, n = {} and {} weights",
                t.m,
                t.n,
                x.m,
                x.n,
                w_prev.len()
            )));
        }
        Ok(vec![
            ("x", x.to_tensor()),
            ("w_prev", Tensor::new(vec![1, t.m], w_prev.non_cash().to_vec())),
        ])
    }

    /// `w_t = pi(X_t, w_{t-1})`.
    pub fn act(&self, x: &PriceTensor, w_prev: &PortfolioVector) -> Result<PolicyOutput> {
        let inputs = self.inputs(x, w_prev)?;
        let ev = self.graph.forward(&self.params, &inputs)?;
        let weights = PortfolioVector::new(ev.value(self.nodes.weights).data().to_vec())?;
        Ok(PolicyOutput {
            weights,
            scores: ev.value(self.nodes.scores).data().to_vec(),
            cash_bias: ev.value(self.nodes.cash_bias).item(),
        })
    }
}

/// Convolutional EIIE with freshly initialized parameters.
pub fn build_cnn_policy(m: usize, n: usize, seed: u64) -> Result<Policy> {
    Policy::initialized(PolicyTopology::cnn(m, n), seed)
}

/// Recurrent EIIE (basic RNN or LSTM) with freshly initialized parameters.
pub fn build_recurrent_policy(m: usize, n: usize, kind: TopologyKind, hidden: usize, seed: u64) -> Result<Policy> {
    if kind == TopologyKind::Cnn {
        return Err(Error::Config("build_recurrent_policy needs a recurrent kind".into()));
    }
    Policy::initialized(PolicyTopology::recurrent(kind, m, n, hidden), seed)
}

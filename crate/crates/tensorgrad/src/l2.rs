use crate::error::Result;
use crate::graph::{Graph, NodeId};
use crate::param::{ParamKind, ParameterSet};

/// `coefficient * sum of squares` over weight parameters; biases excluded.
pub fn l2_penalty(params: &ParameterSet, coefficient: f64) -> f64 {
    coefficient
        * params
            .iter()
            .filter(|(_, p)| p.kind == ParamKind::Weight)
            .map(|(_, p)| p.value.sum_squares())
            .sum::<f64>()
}

/// Adds the L2 penalty of every weight parameter in `params` to `graph`
/// and returns the scalar node, so the penalty is differentiated along
/// with the rest of the objective.
pub fn l2_penalty_node(graph: &mut Graph, params: &ParameterSet, coefficient: f64) -> Result<NodeId> {
    let mut total: Option<NodeId> = None;
    for (name, p) in params.iter().filter(|(_, p)| p.kind == ParamKind::Weight) {
        let node = graph.param(name, p.value.shape())?;
        let sq = graph.sum_squares(node);
        total = Some(match total {
            Some(acc) => graph.add(acc, sq)?,
            None => sq,
        });
    }
    Ok(match total {
        Some(t) => graph.scale(t, coefficient),
        None => graph.constant(crate::Tensor::scalar(0.0)),
    })
}

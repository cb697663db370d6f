use std::collections::BTreeMap;

use crate::error::{GradError, Result};
use crate::param::ParameterSet;
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment accumulators plus the step counter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub first: BTreeMap<String, Tensor>,
    pub second: BTreeMap<String, Tensor>,
    pub step: u64,
}

impl AdamState {
    /// Zeroed accumulators shaped like `params`.
    pub fn for_params(params: &ParameterSet) -> Self {
        let zeros: BTreeMap<String, Tensor> = params
            .iter()
            .map(|(n, p)| (n.to_string(), Tensor::zeros(p.value.shape().to_vec())))
            .collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. With `ascend` the step follows the
/// gradient instead of opposing it.
///
/// All gradients are checked before any parameter is touched, so an error
/// leaves `params` and `state` unchanged.
pub fn adam_step(
    params: &mut ParameterSet,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
    learning_rate: f64,
    ascend: bool,
) -> Result<()> {
    for (name, p) in params.iter() {
        let g = grads
            .get(name)
            .ok_or_else(|| GradError::MissingParameter(name.to_string()))?;
        if g.shape() != p.value.shape() {
            return Err(GradError::Shape {
                node: format!("gradient `{name}`"),
                expected: p.value.shape().to_vec(),
                actual: g.shape().to_vec(),
            });
        }
        if !g.is_finite() {
            return Err(GradError::NonFiniteGradient(name.to_string()));
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - BETA1.powf(t);
    let c2 = 1.0 - BETA2.powf(t);
    let direction = if ascend { 1.0 } else { -1.0 };
    for (name, p) in params.iter_mut() {
        let g = &grads[name];
        let m = state
            .first
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(g.shape().to_vec()));
        let v = state
            .second
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(g.shape().to_vec()));
        for (((w, gi), mi), vi) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
            *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *w += direction * learning_rate * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
    Ok(())
}

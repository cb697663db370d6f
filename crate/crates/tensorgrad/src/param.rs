use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{GradError, Result};
use crate::tensor::Tensor;

/// Whether a parameter participates in L2 regularization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub kind: ParamKind,
    pub value: Tensor,
}

/// Named parameter tensors, iterated in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterSet {
    params: BTreeMap<String, Param>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, kind: ParamKind, value: Tensor) {
        self.params.insert(name.into(), Param { kind, value });
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.get_mut(name)
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| GradError::MissingParameter(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count across all tensors.
    pub fn numel(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }
}

/// Truncated normal with the given standard deviation: draws beyond two
/// standard deviations are redrawn.
pub fn truncated_normal<R: Rng + ?Sized>(shape: &[usize], std_dev: f64, rng: &mut R) -> Tensor {
    let len = shape.iter().product();
    let mut data = Vec::with_capacity(len);
    if std_dev == 0.0 {
        data.resize(len, 0.0);
        return Tensor::new(shape.to_vec(), data);
    }
    let normal = Normal::new(0.0, std_dev).expect("finite positive std dev");
    while data.len() < len {
        let v: f64 = normal.sample(rng);
        if v.abs() <= 2.0 * std_dev {
            data.push(v);
        }
    }
    Tensor::new(shape.to_vec(), data)
}

/// He-style scale `sqrt(2 / fan_in)`.
pub fn he_std(fan_in: usize) -> f64 {
    (2.0 / fan_in.max(1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn truncated_normal_respects_bound_and_seed() {
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        let x = truncated_normal(&[64, 8], 0.5, &mut a);
        let y = truncated_normal(&[64, 8], 0.5, &mut b);
        assert_eq!(x, y);
        assert!(x.data().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn missing_parameter_is_named() {
        let set = ParameterSet::new();
        assert_eq!(
            set.tensor("conv1.kernel").unwrap_err(),
            GradError::MissingParameter("conv1.kernel".into())
        );
    }
}

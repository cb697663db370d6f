//! Reverse-mode differentiation over a static graph of tensor primitives.
//!
//! The primitive set is deliberately narrow: height-1 row convolutions,
//! elementwise arithmetic, matrix multiply, feature concatenation, a
//! softmax with an appended bias logit, basic RNN and LSTM cells, `ln`,
//! and a handful of reductions and reshapes. That is enough to express
//! shared-parameter per-asset evaluators and a differentiable
//! log-return objective, and little else.

pub mod adam;
pub mod checkpoint;
mod error;
pub mod exec;
mod graph;
mod l2;
mod ops;
mod param;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use error::{GradError, Result};
pub use graph::{Evaluation, Gradients, Graph, NodeId};
pub use l2::{l2_penalty, l2_penalty_node};
pub use param::{he_std, truncated_normal, Param, ParamKind, ParameterSet};
pub use tensor::Tensor;

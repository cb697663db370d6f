use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradError {
    #[error("shape mismatch at {node}: expected {expected:?}, got {actual:?}")]
    Shape {
        node: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("invalid operation at {node}: {reason}")]
    InvalidOp { node: String, reason: String },
    #[error("missing input `{0}`")]
    MissingInput(String),
    #[error("unknown input `{0}`")]
    UnknownInput(String),
    #[error("missing parameter `{0}`")]
    MissingParameter(String),
    #[error("non-finite value produced at {node}")]
    NonFinite { node: String },
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("backward target {node} is not a scalar (shape {shape:?})")]
    NotScalar { node: String, shape: Vec<usize> },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, GradError>;

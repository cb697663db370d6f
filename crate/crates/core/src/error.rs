use thiserror::Error;

/// Coarse failure class; the CLI maps each to a distinct exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid portfolio vector: {0}")]
    InvalidPortfolio(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("network error after {attempts} attempt(s): {message}")]
    Network { attempts: u32, message: String },
    #[error("malformed payload, field `{field}`: {message}")]
    Parse { field: String, message: String },
    #[error("insufficient lookback: earliest covered timestamp is {earliest}, need {needed}")]
    InsufficientLookback { earliest: i64, needed: i64 },
    #[error("solver did not converge within {iterations} iterations")]
    Convergence { iterations: usize },
    #[error("{0} is undefined for this input")]
    UndefinedMetric(&'static str),
    #[error("numerical fault at period {period}: {message}")]
    Numerical { period: usize, message: String },
    #[error(transparent)]
    Graph(#[from] tensorgrad::GradError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::InvalidPortfolio(_) => ErrorClass::Validation,
            Error::Data(_)
            | Error::Network { .. }
            | Error::Parse { .. }
            | Error::InsufficientLookback { .. }
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorClass::Data,
            Error::Domain(_)
            | Error::Convergence { .. }
            | Error::UndefinedMetric(_)
            | Error::Numerical { .. } => ErrorClass::Numerical,
            Error::Graph(e) => match e {
                tensorgrad::GradError::Checkpoint(_) => ErrorClass::Data,
                tensorgrad::GradError::Shape { .. } => ErrorClass::Validation,
                _ => ErrorClass::Numerical,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

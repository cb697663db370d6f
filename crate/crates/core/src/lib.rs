//! Portfolio management with EIIE policy networks.
//!
//! - [`marketdata`]: candles, ingestion, cleaning, preselection, price tensors.
//! - [`accounting`]: weight evolution, the transaction remainder factor, returns and risk metrics.
//! - [`policy`]: the convolutional and recurrent EIIE topologies.
//! - [`training`]: portfolio-vector memory, batch sampling, reward, and training loop.
//! - [`backtest`]: rolling back-tests, benchmarks, and comparison reports.
//! - [`config`]: the flat `key = value` run configuration.
//!
//! Numeric kernels come from `tensorgrad`. With the `parallel` feature (on by
//! default) large kernels split across a rayon pool; results are identical
//! either way.

pub mod accounting;
pub mod backtest;
pub mod config;
mod error;
pub mod marketdata;
pub mod policy;
pub mod training;

pub use error::{Error, ErrorClass, Result};
pub use tensorgrad;

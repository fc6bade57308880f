//! Benchmark harness: dataset ingestion, per-series runs of every model,
//! scoring and report files.

pub mod dataset;
pub mod error;
pub mod models;
pub mod report;
pub mod runner;

pub use error::{BenchError, Result};

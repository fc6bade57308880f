//! Sparse variational Gaussian processes with Tweedie and negative-binomial
//! likelihoods for intermittent time series, plus the reference forecasters
//! and metrics used to evaluate them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod gp_core;
pub mod likelihoods;
pub mod metrics;
pub mod optim;
pub mod svgp;
pub mod tweedie;

pub use error::{Error, Result};

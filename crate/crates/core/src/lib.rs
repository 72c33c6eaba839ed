//! Option pricing under rough stochastic local volatility models by a
//! perturbed-kernel Markovian approximation and a two-layer continuous-time
//! Markov chain.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod ctmc;
pub mod error;
pub mod grids;
pub mod kernel;
pub mod matexp;
pub mod mc;
pub mod models;
pub mod pricing;
pub mod quadrature;
pub mod selfcheck;

pub use error::{Error, Result};

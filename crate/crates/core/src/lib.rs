//! Moments, intersection local times and existence regimes for the
//! stochastic heat equation `du = (1/2) Laplace u dt + u dW` driven by a
//! Gaussian noise that is fractional in time (Hurst index `H` in `[1/2, 1)`)
//! and colored in space with covariance kernel `f`.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod chaos;
pub mod cli;
pub mod error;
pub mod fk_moments;
pub mod kernels;
pub mod localtime;
pub mod mc_engine;
pub mod quadrature;
pub mod regime;
pub mod selftest;
mod serde_ext;

pub use error::{Error, Result};

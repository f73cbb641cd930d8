//! Bayesian causal discovery for multivariate functional data.
//!
//! Each observed curve is expanded in a shared, adaptively learned
//! orthonormal spline basis; the basis coefficients follow a linear
//! non-Gaussian structural equation model over a directed acyclic graph, and
//! the full posterior is explored by MCMC.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod sampler;
pub mod scalar;
pub mod splines;
pub mod stats;

pub use error::{Error, Result};

pub type BSplineBasisF64 = splines::BSplineBasis<f64>;
pub type BSplineBasisF32 = splines::BSplineBasis<f32>;
pub type PenaltySystemF64 = splines::PenaltySystem<f64>;
pub type PenaltySystemF32 = splines::PenaltySystem<f32>;
pub type AdaptiveBasisF64 = splines::AdaptiveBasis<f64>;
pub type AdaptiveBasisF32 = splines::AdaptiveBasis<f32>;

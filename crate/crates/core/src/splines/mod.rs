//! Cubic B-spline machinery behind the adaptive orthonormal basis.

mod adaptive;
mod bspline;
mod penalty;
pub mod quadrature;

pub use adaptive::{
    basis_functions_on_grid, lambda_ordered, orthonormalize, prior_variance,
    project_and_normalize, AdaptiveBasis, BIG_VARIANCE, LAMBDA_MAX, LAMBDA_MIN,
};
pub use bspline::BSplineBasis;
pub use penalty::PenaltySystem;

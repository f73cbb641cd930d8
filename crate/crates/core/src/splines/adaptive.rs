//! Data-adaptive orthonormal basis functions `φ_k(ω) = Ã_kᵀ b̃(ω)`.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use super::penalty::PenaltySystem;
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Prior variance standing in for the flat prior on the constant and linear
/// coordinates.
pub const BIG_VARIANCE: f64 = 1e8;
/// Upper bound `U_1` of the smoothness parameters.
pub const LAMBDA_MAX: f64 = 1e8;
/// Lower bound `L_K` of the smoothness parameters.
pub const LAMBDA_MIN: f64 = 1e-8;

/// `K` reparameterized spline coefficient vectors (rows of `coefficients`)
/// and their smoothness parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct AdaptiveBasis<T: Real = f64> {
    pub coefficients: DMatrix<T>,
    pub lambda: Vec<T>,
}

impl<T: Real> AdaptiveBasis<T> {
    pub fn new(coefficients: DMatrix<T>, lambda: Vec<T>) -> Result<Self> {
        if coefficients.nrows() != lambda.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficient vectors but {} smoothness parameters",
                coefficients.nrows(),
                lambda.len()
            )));
        }
        Ok(Self {
            coefficients,
            lambda,
        })
    }

    /// Truncation level `K`.
    pub fn k(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn dim(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn coefficient(&self, k: usize) -> DVector<T> {
        self.coefficients.row(k).transpose()
    }

    pub fn set_coefficient(&mut self, k: usize, v: &DVector<T>) {
        self.coefficients.set_row(k, &RowDVector::from_iterator(v.len(), v.iter().copied()));
    }

    /// Diagonal of the prior covariance `S_k`.
    pub fn prior_variance(&self, k: usize) -> DVector<T> {
        prior_variance(self.dim(), self.lambda[k])
    }

    /// Largest entry of `|Ã J Ãᵀ − I|`.
    pub fn orthonormality_error(&self, j: &DMatrix<T>) -> T {
        let g = &self.coefficients * j * self.coefficients.transpose();
        let mut worst = T::zero();
        for r in 0..g.nrows() {
            for c in 0..g.ncols() {
                let target = if r == c { T::one() } else { T::zero() };
                worst = worst.max((g[(r, c)] - target).abs());
            }
        }
        worst
    }

    /// `λ_1 > … > λ_K`, all strictly inside `(LAMBDA_MIN, LAMBDA_MAX)`.
    pub fn lambda_ordered(&self) -> bool {
        lambda_ordered(&self.lambda)
    }

    pub fn check_invariants(&self, j: &DMatrix<T>, tol: T) -> Result<()> {
        let err = self.orthonormality_error(j);
        if err > tol {
            return Err(Error::InvalidState(format!(
                "basis coefficients are not J-orthonormal (max deviation {err:?})"
            )));
        }
        if !self.lambda_ordered() {
            return Err(Error::InvalidState(format!(
                "smoothness parameters are not strictly decreasing: {:?}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Evaluates `φ_1, …, φ_K` on `grid` (one column per function).
    pub fn functions_on_grid(&self, penalty: &PenaltySystem<T>, grid: &[T]) -> Result<DMatrix<T>> {
        basis_functions_on_grid(self, penalty, grid)
    }
}

pub fn prior_variance<T: Real>(dim: usize, lambda: T) -> DVector<T> {
    DVector::from_fn(dim, |i, _| {
        if i < 2 {
            lit::<T>(BIG_VARIANCE)
        } else {
            T::one() / lambda
        }
    })
}

pub fn lambda_ordered<T: Real>(lambda: &[T]) -> bool {
    let lo = lit::<T>(LAMBDA_MIN);
    let hi = lit::<T>(LAMBDA_MAX);
    lambda.iter().all(|&l| l > lo && l < hi) && lambda.windows(2).all(|w| w[0] > w[1])
}

fn j_inner<T: Real>(u: &DVector<T>, j: &DMatrix<T>, v: &DVector<T>) -> T {
    (u.transpose() * j * v)[(0, 0)]
}

fn degeneracy_threshold<T: Real>(original_norm: T) -> T {
    T::rank_tolerance() * original_norm.max(T::one())
}

/// Gram–Schmidt in the `J` inner product, processing rows in index order.
///
/// Each row is projected off the already-processed rows (twice, for
/// numerical orthogonality) and then `J`-normalized.
pub fn orthonormalize<T: Real>(vectors: &DMatrix<T>, j: &DMatrix<T>) -> Result<DMatrix<T>> {
    let mut done: Vec<DVector<T>> = Vec::with_capacity(vectors.nrows());
    for k in 0..vectors.nrows() {
        let v = vectors.row(k).transpose();
        let q = project_and_normalize(&v, &done, j).map_err(|_| Error::Collinear { index: k })?;
        done.push(q);
    }
    let mut out = DMatrix::zeros(vectors.nrows(), vectors.ncols());
    for (k, q) in done.iter().enumerate() {
        out.set_row(k, &q.transpose());
    }
    Ok(out)
}

/// Projects `v` off the `J`-orthonormal vectors `others` and normalizes it.
pub fn project_and_normalize<T: Real>(
    v: &DVector<T>,
    others: &[DVector<T>],
    j: &DMatrix<T>,
) -> Result<DVector<T>> {
    let original = j_inner(v, j, v).max(T::zero()).sqrt();
    let mut w = v.clone();
    for _ in 0..2 {
        for q in others {
            let c = j_inner(q, j, &w);
            w.axpy(-c, q, T::one());
        }
    }
    let norm = j_inner(&w, j, &w).max(T::zero()).sqrt();
    if norm <= degeneracy_threshold(original) {
        return Err(Error::Collinear {
            index: others.len(),
        });
    }
    Ok(w / norm)
}

/// Column `k` of the result holds `φ_k` evaluated on `grid`.
pub fn basis_functions_on_grid<T: Real>(
    basis: &AdaptiveBasis<T>,
    penalty: &PenaltySystem<T>,
    grid: &[T],
) -> Result<DMatrix<T>> {
    if basis.dim() != penalty.dim() {
        return Err(Error::DimensionMismatch(format!(
            "basis coefficients have length {}, penalty system has {}",
            basis.dim(),
            penalty.dim()
        )));
    }
    let design = penalty.btilde_design(grid)?;
    Ok(design * basis.coefficients.transpose())
}

//! Roughness penalty, its spectral factors, and the reparameterized basis
//! `b̃(ω) = (1, ω, b(ω)ᵀ U_P D_P^{-1/2})ᵀ`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::bspline::BSplineBasis;
use super::quadrature::{gauss_legendre, mapped_rule};
use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Gauss–Legendre nodes per knot interval. Integrands are piecewise
/// polynomials of degree at most 6, so 10 nodes integrate them exactly.
const NODES_PER_INTERVAL: usize = 10;

#[derive(Clone, Debug)]
pub struct PenaltySystem<T: Real = f64> {
    basis: BSplineBasis<T>,
    omega: DMatrix<T>,
    u: DMatrix<T>,
    d: DVector<T>,
    u_p: DMatrix<T>,
    d_p: DVector<T>,
    /// `U_P D_P^{-1/2}`, the map from penalized coordinates to B-spline coefficients.
    transform: DMatrix<T>,
    j: DMatrix<T>,
}

impl<T: Real> PenaltySystem<T> {
    pub fn new(basis: BSplineBasis<T>) -> Result<Self> {
        let l = basis.len();
        if l < 3 {
            return Err(Error::InvalidConfiguration(format!(
                "penalty needs at least 3 basis functions, got {l}"
            )));
        }
        if basis.order() < 3 {
            return Err(Error::InvalidConfiguration(
                "second-derivative penalty needs order >= 3".into(),
            ));
        }

        let rule = quadrature_points(&basis);
        let mut omega = DMatrix::<T>::zeros(l, l);
        for &(x, w) in &rule {
            let d2 = basis.evaluate_derivative(x, 2)?;
            omega.ger(w, &d2, &d2, T::one());
        }
        omega = (&omega + omega.transpose()) * lit::<T>(0.5);

        let eig = SymmetricEigen::new(omega.clone());
        let mut order: Vec<usize> = (0..l).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .abs()
                .partial_cmp(&eig.eigenvalues[a].abs())
                .expect("finite eigenvalues")
        });
        let u = DMatrix::from_fn(l, l, |r, c| eig.eigenvectors[(r, order[c])]);
        let d = DVector::from_fn(l, |i, _| eig.eigenvalues[order[i]].abs());

        let max = d[0];
        let tol = max * T::rank_tolerance().max(lit::<T>(1e-10));
        let null_dim = d.iter().filter(|&&v| v < tol).count();
        if null_dim != 2 {
            return Err(Error::NumericalDegeneracy(format!(
                "penalty matrix has {} near-zero singular values, expected 2",
                null_dim
            )));
        }

        let np = l - 2;
        let u_p = u.columns(0, np).into_owned();
        let d_p = d.rows(0, np).into_owned();
        let transform = DMatrix::from_fn(l, np, |r, c| u_p[(r, c)] / d_p[c].sqrt());

        let mut sys = Self {
            basis,
            omega,
            u,
            d,
            u_p,
            d_p,
            transform,
            j: DMatrix::zeros(l, l),
        };
        let mut j = DMatrix::<T>::zeros(l, l);
        for &(x, w) in &rule {
            let bt = sys.btilde(x)?;
            j.ger(w, &bt, &bt, T::one());
        }
        sys.j = (&j + j.transpose()) * lit::<T>(0.5);
        Ok(sys)
    }

    /// Cubic B-splines with `n_basis` functions and their penalty system.
    pub fn cubic(n_basis: usize) -> Result<Self> {
        Self::new(BSplineBasis::uniform(n_basis, 4)?)
    }

    pub fn basis(&self) -> &BSplineBasis<T> {
        &self.basis
    }

    /// Dimension of the reparameterized basis (equal to `L`).
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn omega(&self) -> &DMatrix<T> {
        &self.omega
    }

    pub fn u(&self) -> &DMatrix<T> {
        &self.u
    }

    /// Singular values of Ω in decreasing order.
    pub fn singular_values(&self) -> &DVector<T> {
        &self.d
    }

    pub fn u_p(&self) -> &DMatrix<T> {
        &self.u_p
    }

    pub fn d_p(&self) -> &DVector<T> {
        &self.d_p
    }

    /// Gram matrix `J = ∫ b̃ b̃ᵀ`.
    pub fn gram(&self) -> &DMatrix<T> {
        &self.j
    }

    /// Reparameterized basis vector `b̃(x)`.
    pub fn btilde(&self, x: T) -> Result<DVector<T>> {
        let b = self.basis.evaluate(x)?;
        Ok(self.lift(x, &b))
    }

    fn lift(&self, x: T, b: &DVector<T>) -> DVector<T> {
        let pen = self.transform.tr_mul(b);
        let mut out = DVector::zeros(self.dim());
        out[0] = T::one();
        out[1] = x;
        out.rows_mut(2, pen.len()).copy_from(&pen);
        out
    }

    /// Design matrix whose row `m` is `b̃(points[m])ᵀ`.
    pub fn btilde_design(&self, points: &[T]) -> Result<DMatrix<T>> {
        let b = self.basis.design_matrix(points)?;
        let pen = &b * &self.transform;
        let mut out = DMatrix::zeros(points.len(), self.dim());
        for (m, &x) in points.iter().enumerate() {
            out[(m, 0)] = T::one();
            out[(m, 1)] = x;
        }
        out.columns_mut(2, pen.ncols()).copy_from(&pen);
        Ok(out)
    }

    /// Second derivatives of `b̃` at the given points (first two columns vanish).
    pub fn btilde_second_derivative_design(&self, points: &[T]) -> Result<DMatrix<T>> {
        let b2 = self.basis.design_matrix_derivative(points, 2)?;
        let pen = &b2 * &self.transform;
        let mut out = DMatrix::zeros(points.len(), self.dim());
        out.columns_mut(2, pen.ncols()).copy_from(&pen);
        Ok(out)
    }

    /// B-spline coefficients `A` with `Aᵀ b(ω) = Ãᵀ b̃(ω)` for all ω.
    pub fn to_bspline_coefficients(&self, coef: &DVector<T>) -> DVector<T> {
        let l = self.dim();
        let pen = coef.rows(2, l - 2);
        let mut a = &self.transform * pen;
        let greville = self.basis.greville();
        for i in 0..l {
            a[i] += coef[0] + coef[1] * greville[i];
        }
        a
    }

    /// Inverse of [`Self::to_bspline_coefficients`].
    pub fn from_bspline_coefficients(&self, a: &DVector<T>) -> Result<DVector<T>> {
        // b̃ = M b with rows (1ᵀ, gᵀ, transformᵀ); Mᵀ Ã = A
        let l = self.dim();
        let greville = self.basis.greville();
        let mut mt = DMatrix::<T>::zeros(l, l);
        for i in 0..l {
            mt[(i, 0)] = T::one();
            mt[(i, 1)] = greville[i];
        }
        mt.columns_mut(2, l - 2).copy_from(&self.transform);
        mt.lu()
            .solve(a)
            .ok_or_else(|| Error::NumericalDegeneracy("reparameterization map is singular".into()))
    }

    /// Integrated squared second derivative of `Ãᵀ b̃`, i.e. the squared
    /// norm of the penalized coordinates.
    pub fn roughness(&self, coef: &DVector<T>) -> T {
        coef.rows(2, self.dim() - 2).norm_squared()
    }

    /// Quadrature rule (points, weights) that integrates piecewise
    /// polynomials on this basis' knots exactly.
    pub fn quadrature(&self) -> Vec<(T, T)> {
        quadrature_points(&self.basis)
    }
}

fn quadrature_points<T: Real>(basis: &BSplineBasis<T>) -> Vec<(T, T)> {
    let (nodes, weights) = gauss_legendre(NODES_PER_INTERVAL);
    let bp = basis.breakpoints();
    let mut out = Vec::with_capacity((bp.len() - 1) * NODES_PER_INTERVAL);
    for w in bp.windows(2) {
        for (x, wt) in mapped_rule(to_f64(w[0]), to_f64(w[1]), &nodes, &weights) {
            out.push((lit::<T>(x), lit::<T>(wt)));
        }
    }
    out
}

//! B-spline bases on [0, 1] with equally spaced interior knots.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// A clamped B-spline basis of a given order on [0, 1].
///
/// The knot vector holds `order` copies of each boundary knot and
/// `n_basis - order` equally spaced interior knots, so its length is
/// `n_basis + order`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct BSplineBasis<T: Real = f64> {
    order: usize,
    n_basis: usize,
    knots: Vec<T>,
}

impl<T: Real> BSplineBasis<T> {
    /// Builds `n_basis` B-splines of the given order (4 = cubic).
    pub fn uniform(n_basis: usize, order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidConfiguration(format!(
                "B-spline order must be at least 2, got {order}"
            )));
        }
        if n_basis < order {
            return Err(Error::InvalidConfiguration(format!(
                "need at least {order} basis functions for order {order}, got {n_basis}"
            )));
        }
        let n_interior = n_basis - order;
        let mut knots = Vec::with_capacity(n_basis + order);
        knots.extend(std::iter::repeat_n(T::zero(), order));
        for i in 1..=n_interior {
            knots.push(lit::<T>(i as f64 / (n_interior + 1) as f64));
        }
        knots.extend(std::iter::repeat_n(T::one(), order));
        Ok(Self {
            order,
            n_basis,
            knots,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn degree(&self) -> usize {
        self.order - 1
    }

    /// Number of basis functions `L`.
    pub fn len(&self) -> usize {
        self.n_basis
    }

    pub fn is_empty(&self) -> bool {
        self.n_basis == 0
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn interior_knots(&self) -> &[T] {
        &self.knots[self.order..self.n_basis]
    }

    /// Distinct knot values, i.e. the breakpoints of the piecewise polynomials.
    pub fn breakpoints(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_basis - self.order + 2);
        out.push(T::zero());
        out.extend_from_slice(self.interior_knots());
        out.push(T::one());
        out
    }

    /// Greville abscissae: the coefficient vector reproducing `f(x) = x`.
    pub fn greville(&self) -> DVector<T> {
        let deg = self.degree();
        let scale = lit::<T>(deg as f64);
        DVector::from_fn(self.n_basis, |i, _| {
            let mut s = T::zero();
            for t in &self.knots[i + 1..=i + deg] {
                s += *t;
            }
            s / scale
        })
    }

    fn check_domain(x: T) -> Result<()> {
        if x >= T::zero() && x <= T::one() {
            Ok(())
        } else {
            Err(Error::Domain(to_f64(x)))
        }
    }

    /// Index `i` of the knot span with `knots[i] <= x < knots[i + 1]`; the
    /// right end point maps to the last non-empty span.
    fn find_span(&self, x: T) -> usize {
        let deg = self.degree();
        let last = self.n_basis - 1;
        if x >= self.knots[last + 1] {
            return last;
        }
        let (mut lo, mut hi) = (deg, last + 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Non-vanishing basis functions and their derivatives at `x`.
    ///
    /// Returns the span index `i` and `ders[d][r]`, the `d`-th derivative of
    /// basis function `i - degree + r`, for `d = 0..=n_ders`.
    pub fn nonzero_derivatives(&self, x: T, n_ders: usize) -> Result<(usize, Vec<Vec<T>>)> {
        Self::check_domain(x)?;
        let p = self.degree();
        let span = self.find_span(x);
        let u = &self.knots;

        let mut ndu = vec![vec![T::zero(); p + 1]; p + 1];
        let mut left = vec![T::zero(); p + 1];
        let mut right = vec![T::zero(); p + 1];
        ndu[0][0] = T::one();
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = T::zero();
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        let mut ders = vec![vec![T::zero(); p + 1]; n_ders + 1];
        for (j, d0) in ders[0].iter_mut().enumerate() {
            *d0 = ndu[j][p];
        }

        let mut a = [vec![T::zero(); p + 1], vec![T::zero(); p + 1]];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = T::one();
            for k in 1..=n_ders.min(p) {
                let mut d = T::zero();
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    let rk = rk as usize;
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                    d = a[s2][0] * ndu[rk][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = lit::<T>(p as f64);
        for k in 1..=n_ders.min(p) {
            for v in ders[k].iter_mut() {
                *v *= factor;
            }
            factor *= lit::<T>((p - k) as f64);
        }
        Ok((span, ders))
    }

    /// All `L` basis values (or their `deriv`-th derivatives) at `x`.
    pub fn evaluate_derivative(&self, x: T, deriv: usize) -> Result<DVector<T>> {
        let (span, ders) = self.nonzero_derivatives(x, deriv)?;
        let mut out = DVector::zeros(self.n_basis);
        let first = span - self.degree();
        for (r, v) in ders[deriv].iter().enumerate() {
            out[first + r] = *v;
        }
        Ok(out)
    }

    pub fn evaluate(&self, x: T) -> Result<DVector<T>> {
        self.evaluate_derivative(x, 0)
    }

    /// Design matrix with row `m` holding `(b_1(x_m), ..., b_L(x_m))`.
    pub fn design_matrix(&self, points: &[T]) -> Result<DMatrix<T>> {
        self.design_matrix_derivative(points, 0)
    }

    pub fn design_matrix_derivative(&self, points: &[T], deriv: usize) -> Result<DMatrix<T>> {
        let mut out = DMatrix::zeros(points.len(), self.n_basis);
        for (m, &x) in points.iter().enumerate() {
            let (span, ders) = self.nonzero_derivatives(x, deriv)?;
            let first = span - self.degree();
            for (r, v) in ders[deriv].iter().enumerate() {
                out[(m, first + r)] = *v;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn knot_layout_for_six_cubics() {
        let b = BSplineBasis::<f64>::uniform(6, 4).unwrap();
        assert_eq!(b.len(), 6);
        assert_eq!(b.knots().len(), 10);
        assert_eq!(b.interior_knots().len(), 2);
        assert_abs_diff_eq!(b.interior_knots()[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.interior_knots()[1], 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_too_few_functions() {
        assert!(matches!(
            BSplineBasis::<f64>::uniform(3, 4),
            Err(Error::InvalidConfiguration(_))
        ));
        assert!(BSplineBasis::<f64>::uniform(4, 1).is_err());
    }

    #[test]
    fn boundary_values_are_clamped() {
        let b = BSplineBasis::<f64>::uniform(6, 4).unwrap();
        let v0 = b.evaluate(0.0).unwrap();
        assert_eq!(v0[0], 1.0);
        assert!(v0.iter().skip(1).all(|&v| v == 0.0));
        let v1 = b.evaluate(1.0).unwrap();
        assert_eq!(v1[5], 1.0);
        assert!(v1.iter().take(5).all(|&v| v == 0.0));
    }

    #[test]
    fn outside_domain_is_an_error() {
        let b = BSplineBasis::<f64>::uniform(6, 4).unwrap();
        assert!(matches!(b.evaluate(1.5), Err(Error::Domain(_))));
        assert!(matches!(b.design_matrix(&[0.2, -0.1]), Err(Error::Domain(_))));
    }

    #[test]
    fn middle_point_sums_to_one() {
        let b = BSplineBasis::<f64>::uniform(6, 4).unwrap();
        assert_abs_diff_eq!(b.evaluate(0.5).unwrap().sum(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn greville_reproduces_identity() {
        let b = BSplineBasis::<f64>::uniform(9, 4).unwrap();
        let g = b.greville();
        for &x in &[0.0, 0.13, 0.5, 0.77, 1.0] {
            assert_abs_diff_eq!(b.evaluate(x).unwrap().dot(&g), x, epsilon = 1e-14);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let b = BSplineBasis::<f64>::uniform(10, 4).unwrap();
        let h = 1e-5;
        for &x in &[0.05, 0.31, 0.52, 0.9] {
            let d1 = b.evaluate_derivative(x, 1).unwrap();
            let d2 = b.evaluate_derivative(x, 2).unwrap();
            let fp = b.evaluate(x + h).unwrap();
            let fm = b.evaluate(x - h).unwrap();
            let f0 = b.evaluate(x).unwrap();
            for l in 0..10 {
                assert_abs_diff_eq!(d1[l], (fp[l] - fm[l]) / (2.0 * h), epsilon = 1e-6);
                assert_abs_diff_eq!(d2[l], (fp[l] - 2.0 * f0[l] + fm[l]) / (h * h), epsilon = 1e-3);
            }
        }
    }

    #[test]
    fn support_spans_at_most_order_intervals() {
        let b = BSplineBasis::<f64>::uniform(12, 4).unwrap();
        let grid: Vec<f64> = (0..=2000).map(|i| i as f64 / 2000.0).collect();
        let x = b.design_matrix(&grid).unwrap();
        let width = 1.0 / 9.0;
        for l in 0..12 {
            let support: Vec<f64> = grid
                .iter()
                .enumerate()
                .filter(|(m, _)| x[(*m, l)] > 0.0)
                .map(|(_, &g)| g)
                .collect();
            let extent = support.last().unwrap() - support.first().unwrap();
            assert!(extent <= 4.0 * width + 1e-9);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let b = BSplineBasis::<f32>::uniform(20, 4).unwrap();
        for &x in &[0.0f32, 0.3, 0.71, 1.0] {
            assert!((b.evaluate(x).unwrap().sum() - 1.0).abs() < 1e-6);
        }
    }
}

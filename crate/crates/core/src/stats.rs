//! Densities and samplers for the conjugate families used by the model.


use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log N(x; 0, variance)`.
#[inline]
pub fn normal_ln_pdf(x: f64, variance: f64) -> f64 {
    -0.5 * (LN_2PI + variance.ln() + x * x / variance)
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Inverse-gamma with density `b^a / Γ(a) x^{-a-1} exp(-b / x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InverseGamma {
    pub shape: f64,
    pub scale: f64,
}

impl InverseGamma {
    pub fn new(shape: f64, scale: f64) -> Self {
        Self { shape, scale }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shape * self.scale.ln() - ln_gamma(self.shape) - (self.shape + 1.0) * x.ln()
            - self.scale / x
    }

    /// Mode `b / (a + 1)`; used where the mean does not exist.
    pub fn mode(&self) -> f64 {
        self.scale / (self.shape + 1.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.scale <= 0.0 {
            // Degenerate at zero; keep variances strictly positive.
            return f64::MIN_POSITIVE;
        }
        let g = Gamma::new(self.shape, 1.0 / self.scale)
            .expect("inverse-gamma parameters must be positive")
            .sample(rng);
        (1.0 / g).clamp(f64::MIN_POSITIVE, f64::MAX)
    }
}

/// `log Beta(x; a, b)`.
pub fn beta_ln_pdf(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return f64::NEG_INFINITY;
    }
    (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(a, b)
}

pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let x = Gamma::new(a, 1.0).expect("positive shape").sample(rng);
    let y = Gamma::new(b, 1.0).expect("positive shape").sample(rng);
    let v = x / (x + y);
    v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

pub fn dirichlet_ln_pdf(x: &[f64], alpha: &[f64]) -> f64 {
    let total: f64 = alpha.iter().sum();
    let mut s = ln_gamma(total);
    for (&xi, &ai) in x.iter().zip(alpha) {
        if xi <= 0.0 {
            return f64::NEG_INFINITY;
        }
        s += (ai - 1.0) * xi.ln() - ln_gamma(ai);
    }
    s
}

pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let mut g: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            Gamma::new(a, 1.0)
                .expect("positive concentration")
                .sample(rng)
                .max(f64::MIN_POSITIVE)
        })
        .collect();
    let total: f64 = g.iter().sum();
    for v in g.iter_mut() {
        *v /= total;
    }
    g
}

/// Index drawn with probability proportional to `exp(log_weights)`.
pub fn sample_log_categorical<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_weights.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return i;
        }
        u -= wi;
    }
    w.len() - 1
}

pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    if rng.random::<bool>() {
        scale * e
    } else {
        -scale * e
    }
}

#[inline]
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Multivariate normal specified by its precision matrix `Q` and the
/// linear term `l`, so that the mean solves `Q μ = l`.
#[derive(Clone, Debug)]
pub struct GaussianPrecision {
    pub mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl GaussianPrecision {
    pub fn from_canonical(precision: DMatrix<f64>, linear: &DVector<f64>) -> Result<Self> {
        let dim = precision.nrows();
        let chol = Cholesky::new(precision).ok_or_else(|| {
            Error::NotPositiveDefinite(format!("{dim}x{dim} posterior precision"))
        })?;
        let mean = chol.solve(linear);
        Ok(Self { mean, chol })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `mean + L^{-T} ξ` with `Q = L Lᵀ`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let xi = standard_normal_vector(self.dim(), rng);
        let shift = self
            .chol
            .l_dirty()
            .tr_solve_lower_triangular(&xi)
            .expect("Cholesky factor is nonsingular");
        &self.mean + shift
    }

    pub fn ln_pdf(&self, x: &DVector<f64>) -> f64 {
        let l = self.chol.l();
        let diff = x - &self.mean;
        let q = l.tr_mul(&diff).norm_squared();
        let log_det: f64 = l.diagonal().iter().map(|v| v.ln()).sum();
        -0.5 * self.dim() as f64 * LN_2PI + log_det - 0.5 * q
    }

    /// `log det Q`.
    pub fn log_det_precision(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Gamma(shape, rate) restricted to `(lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncatedGamma {
    pub shape: f64,
    pub rate: f64,
    pub lo: f64,
    pub hi: f64,
}

impl TruncatedGamma {
    /// Log density up to the truncation constant (−∞ outside the interval).
    pub fn ln_pdf_unnormalized(&self, x: f64) -> f64 {
        if x <= self.lo || x >= self.hi {
            return f64::NEG_INFINITY;
        }
        (self.shape - 1.0) * x.ln() - self.rate * x
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        assert!(self.shape >= 1.0, "truncated gamma sampler needs shape >= 1");
        assert!(self.lo < self.hi, "empty truncation interval");
        let (a, b, lo, hi) = (self.shape, self.rate, self.lo, self.hi);
        let inside = |x: f64| x > lo && x < hi;

        if b <= 0.0 {
            // density ∝ x^{a-1}: invert the CDF in log space
            let u: f64 = rng.random();
            let la = a * lo.ln();
            let ha = a * hi.ln();
            let v = ha + (u + (1.0 - u) * (la - ha).exp()).ln();
            return (v / a).exp().clamp(lo.next_up(), hi.next_down());
        }

        let gamma = Gamma::new(a, 1.0 / b).expect("valid gamma parameters");
        for _ in 0..64 {
            let x = gamma.sample(rng);
            if inside(x) {
                return x;
            }
        }

        let mode = (a - 1.0) / b;
        let log_f = |x: f64| (a - 1.0) * x.ln() - b * x;
        for _ in 0..1_000_000 {
            let x = if lo >= mode || hi <= mode {
                // Log-concave tail: tangent line at the end point nearest the
                // mode bounds the log density; propose from that exponential.
                let anchor = if lo >= mode { lo } else { hi };
                let slope = (a - 1.0) / anchor - b;
                let width = hi - lo;
                let u: f64 = rng.random();
                let t = if slope.abs() * width < 1e-12 {
                    u * width
                } else {
                    let s = -slope.abs();
                    // truncated exponential distance from the anchor
                    (u * (s * width).exp_m1()).ln_1p() / s
                };
                let x = if lo >= mode { lo + t } else { hi - t };
                let envelope = log_f(anchor) + slope * (x - anchor);
                if rng.random::<f64>().ln() <= log_f(x) - envelope {
                    x
                } else {
                    continue;
                }
            } else {
                let x = lo + rng.random::<f64>() * (hi - lo);
                if rng.random::<f64>().ln() <= log_f(x) - log_f(mode) {
                    x
                } else {
                    continue;
                }
            };
            if inside(x) {
                return x;
            }
        }
        0.5 * (lo + hi)
    }
}

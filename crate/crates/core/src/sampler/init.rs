//! Starting values and the choice of the truncation level `K`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use super::cache::DataCache;
use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::model::{EffectBlocks, FunctionalDataset, Hyperparameters, MixtureNoise, ModelState};
use crate::splines::{orthonormalize, AdaptiveBasis, PenaltySystem};
use crate::model::nominal_lambdas;
use crate::stats::InverseGamma;

/// Fraction of variance the selected truncation level must explain.
pub const FVE_TARGET: f64 = 0.9;

/// Smoothing parameters tried by generalized cross-validation (log10 scale).
const LOG10_KAPPA: std::ops::RangeInclusive<i32> = -12..=2;

/// `G + κP` with `P` the identity on the penalized coordinates, plus a tiny
/// ridge so grids with fewer than two distinct points stay invertible.
fn penalized_gram(g: &DMatrix<f64>, kappa: f64) -> DMatrix<f64> {
    let mut m = g.clone();
    let ridge = 1e-10 * (1.0 + g.diagonal().amax());
    for c in 0..m.nrows() {
        m[(c, c)] += ridge + if c >= 2 { kappa } else { 0.0 };
    }
    m
}

/// Penalized spline fits of every curve, in `b̃` coordinates.
pub fn smooth_curves(cache: &DataCache, kappa: f64) -> Result<Vec<DVector<f64>>> {
    let chols = cache
        .grams()
        .iter()
        .map(|g| {
            penalized_gram(g, kappa)
                .cholesky()
                .ok_or_else(|| Error::NotPositiveDefinite("penalized smoother".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(cache.n() * cache.p());
    for i in 0..cache.n() {
        for j in 0..cache.p() {
            let c = cache.curve(i, j);
            out.push(chols[c.grid].solve(&c.h));
        }
    }
    Ok(out)
}

/// Smoothing parameter minimizing the pooled generalized cross-validation score.
pub fn smoothing_parameter(cache: &DataCache) -> Result<f64> {
    let total: usize = (0..cache.p()).map(|j| cache.points(j)).sum();
    let mut curves_per_grid = vec![0usize; cache.grams().len()];
    for i in 0..cache.n() {
        for j in 0..cache.p() {
            curves_per_grid[cache.curve(i, j).grid] += 1;
        }
    }
    let mut best: Option<(f64, f64)> = None;
    for e in LOG10_KAPPA {
        let kappa = 10f64.powi(e);
        let mut df = 0.0;
        let mut chols = Vec::with_capacity(cache.grams().len());
        for (g, count) in cache.grams().iter().zip(&curves_per_grid) {
            let chol = penalized_gram(g, kappa)
                .cholesky()
                .ok_or_else(|| Error::NotPositiveDefinite("penalized smoother".into()))?;
            df += *count as f64 * chol.solve(g).trace();
            chols.push(chol);
        }
        if df >= total as f64 {
            continue;
        }
        let mut rss = 0.0;
        for i in 0..cache.n() {
            for j in 0..cache.p() {
                let c = cache.curve(i, j);
                let g = &cache.grams()[c.grid];
                let coef = chols[c.grid].solve(&c.h);
                rss += (c.ww - 2.0 * coef.dot(&c.h) + (coef.transpose() * g * &coef)[(0, 0)]).max(0.0);
            }
        }
        let score = rss / total as f64 / (1.0 - df / total as f64).powi(2);
        if best.is_none_or(|(s, _)| score < s) {
            best = Some((score, kappa));
        }
    }
    Ok(best.map_or(1.0, |(_, k)| k))
}

/// Functional principal components of the smoothed curves in the `L²`
/// inner product, after centering each function across subjects.
#[derive(Clone, Debug)]
pub struct FunctionalPca {
    /// Component variances, decreasing.
    pub eigenvalues: Vec<f64>,
    /// Row `k` holds the `b̃` coefficients of the `k`-th eigenfunction.
    pub eigenfunctions: DMatrix<f64>,
}

impl FunctionalPca {
    pub fn fit(cache: &DataCache, penalty: &PenaltySystem<f64>) -> Result<Self> {
        let l = penalty.dim();
        let (n, p) = (cache.n(), cache.p());
        let mut cov = DMatrix::<f64>::zeros(l, l);
        if n > 0 {
            let kappa = smoothing_parameter(cache)?;
            let coefs = smooth_curves(cache, kappa)?;
            for j in 0..p {
                let mut mean = DVector::<f64>::zeros(l);
                if n > 1 {
                    for i in 0..n {
                        mean += &coefs[i * p + j];
                    }
                    mean /= n as f64;
                }
                for i in 0..n {
                    let d = &coefs[i * p + j] - &mean;
                    cov.ger(1.0, &d, &d, 1.0);
                }
            }
            cov /= (n * p) as f64;
        }
        // With J = R Rᵀ the operator eigenproblem becomes Rᵀ C R u = μ u, ã = R⁻ᵀ u.
        let chol = penalty
            .gram()
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("basis Gram matrix".into()))?;
        let r = chol.l();
        let eig = SymmetricEigen::new(r.transpose() * &cov * &r);
        let mut order: Vec<usize> = (0..l).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let u = DMatrix::from_fn(l, l, |row, col| eig.eigenvectors[(row, order[col])]);
        let rt = r.transpose();
        let a = rt
            .solve_upper_triangular(&u)
            .ok_or_else(|| Error::NumericalDegeneracy("basis Gram factor is singular".into()))?;
        Ok(Self {
            eigenvalues: order.iter().map(|&c| eig.eigenvalues[c].max(0.0)).collect(),
            eigenfunctions: a.transpose(),
        })
    }

    /// Fraction of variance explained by the leading `k` components.
    pub fn fve(&self, k: usize) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        if total <= 0.0 {
            return 1.0;
        }
        (self.eigenvalues.iter().take(k).sum::<f64>() / total).min(1.0)
    }
}

/// Smallest candidate whose leading components explain at least 90% of the
/// variance of the smoothed curves; the largest candidate if none does.
pub fn select_k(dataset: &FunctionalDataset, hp: &Hyperparameters, candidates: &[usize]) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::InvalidConfiguration("no candidate truncation levels".into()));
    }
    if dataset.n() == 0 {
        return Err(Error::InvalidConfiguration("cannot select K without observations".into()));
    }
    if let Some(&bad) = candidates.iter().find(|&&k| k == 0 || k > hp.n_splines) {
        return Err(Error::InvalidConfiguration(format!(
            "candidate K = {bad} outside 1..={}",
            hp.n_splines
        )));
    }
    let penalty = PenaltySystem::cubic(hp.n_splines)?;
    let cache = DataCache::new(dataset, &penalty)?;
    let pca = FunctionalPca::fit(&cache, &penalty)?;
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    let chosen = sorted
        .iter()
        .copied()
        .find(|&k| pca.fve(k) >= FVE_TARGET)
        .unwrap_or(*sorted.last().expect("nonempty"));
    log::info!("selected K = {chosen} (FVE {:.3})", pca.fve(chosen));
    Ok(chosen)
}

/// Starting state: empty graph, functional principal components as the
/// basis, latent coefficients by ridge regression, noise variances from the
/// ridge residuals, and mixture variances spread around the coefficient
/// variance.
pub fn initialize<R: Rng + ?Sized>(
    cache: &DataCache,
    hp: &Hyperparameters,
    penalty: Arc<PenaltySystem<f64>>,
    rng: &mut R,
) -> Result<ModelState> {
    hp.validate()?;
    let (n, p, k, m) = (cache.n(), cache.p(), hp.k, hp.m);
    if penalty.dim() != hp.n_splines {
        return Err(Error::DimensionMismatch("penalty system does not match n_splines".into()));
    }
    let pca = FunctionalPca::fit(cache, &penalty)?;
    let leading = pca.eigenfunctions.rows(0, k).into_owned();
    let coefficients = orthonormalize(&leading, penalty.gram())?;
    let lambda = nominal_lambdas(&coefficients, &penalty);
    let basis = AdaptiveBasis::new(coefficients, lambda)?;

    let projected = cache.projected_grams(&basis);
    let mut z = vec![DMatrix::<f64>::zeros(p, k); n];
    for (i, zi) in z.iter_mut().enumerate() {
        for j in 0..p {
            let c = cache.curve(i, j);
            let mut a = projected[c.grid].clone();
            let ridge = 1e-8 * (1.0 + a.diagonal().amax());
            for d in 0..k {
                a[(d, d)] += ridge;
            }
            let rhs = &basis.coefficients * &c.h;
            let sol = a
                .cholesky()
                .ok_or_else(|| Error::NotPositiveDefinite("initial ridge system".into()))?
                .solve(&rhs);
            zi.set_row(j, &sol.transpose());
        }
    }

    let sigma_prior = InverseGamma::new(hp.a_sigma, hp.b_sigma);
    let mut state = ModelState {
        dag: Dag::empty(p),
        effects: EffectBlocks::zeros(p, k, InverseGamma::new(hp.a_gamma, hp.b_gamma).mode()),
        noise: MixtureNoise {
            m,
            weights: vec![vec![1.0 / m as f64; m]; p * k],
            variances: vec![vec![1.0; m]; p * k],
            assignments: (0..n * p * k).map(|_| rng.random_range(0..m)).collect(),
        },
        z,
        sigma: vec![sigma_prior.mode(); p],
        r: hp.a_r / (hp.a_r + hp.b_r),
        basis,
        penalty,
    };

    if n > 0 {
        let rss = cache.residual_sum_squares(&state, &projected);
        for j in 0..p {
            let count = cache.points(j) as f64;
            let scale: f64 = (0..n).map(|i| cache.curve(i, j).ww).sum::<f64>() / count;
            state.sigma[j] = (rss[j] / count).max(1e-8 * scale).max(f64::MIN_POSITIVE);
        }
    }
    let tau_mode = InverseGamma::new(hp.a_tau, hp.b_tau).mode();
    for j in 0..p {
        for kk in 0..k {
            let base = if n > 1 {
                let vals: Vec<f64> = state.z.iter().map(|zi| zi[(j, kk)]).collect();
                let mean = vals.iter().sum::<f64>() / n as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                if var > 0.0 { var } else { tau_mode }
            } else {
                tau_mode
            };
            let jk = state.jk(j, kk);
            for c in 0..m {
                state.noise.variances[jk][c] = base * 2f64.powf(c as f64 - 0.5 * (m - 1) as f64);
            }
        }
    }
    state.validate()?;
    Ok(state)
}

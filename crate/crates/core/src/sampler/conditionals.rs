//! Full conditional distributions of every parameter block.
//!
//! All of them condition on the mixture assignments. Each is exposed so the
//! samplers can be audited against the joint density.

use nalgebra::{DMatrix, DVector};

use super::cache::DataCache;
use crate::error::Result;
use crate::model::{log_edge_prior_counts, sem_residual, EdgePrior, Hyperparameters, ModelState};
use crate::splines::{AdaptiveBasis, LAMBDA_MAX, LAMBDA_MIN};
use crate::stats::{normal_ln_pdf, GaussianPrecision, InverseGamma, TruncatedGamma, LN_2PI};

/// SEM residuals `ε_i`, one `p × K` matrix per subject.
pub fn residuals(state: &ModelState) -> Result<Vec<DMatrix<f64>>> {
    state
        .z
        .iter()
        .map(|z| sem_residual(z, &state.effects, &state.dag))
        .collect()
}

pub(crate) fn parent_lists(state: &ModelState) -> Vec<Vec<usize>> {
    (0..state.p()).map(|j| state.dag.parents(j)).collect()
}

/// Conditional of `vec(Z_i)` (index `j * K + k`).
pub fn z_conditional(
    cache: &DataCache,
    state: &ModelState,
    projected: &[DMatrix<f64>],
    i: usize,
) -> Result<GaussianPrecision> {
    z_conditional_with(cache, state, projected, &parent_lists(state), i)
}

pub(crate) fn z_conditional_with(
    cache: &DataCache,
    state: &ModelState,
    projected: &[DMatrix<f64>],
    parents: &[Vec<usize>],
    i: usize,
) -> Result<GaussianPrecision> {
    let (p, k) = (state.p(), state.k());
    let a = &state.basis.coefficients;
    let mut q = DMatrix::<f64>::zeros(p * k, p * k);
    let mut lin = DVector::<f64>::zeros(p * k);
    for j in 0..p {
        let c = cache.curve(i, j);
        let s = state.sigma[j];
        let mut block = q.view_mut((j * k, j * k), (k, k));
        block += &projected[c.grid] / s;
        let ah = a * &c.h / s;
        lin.rows_mut(j * k, k).copy_from(&ah);
    }
    // ε_jk = Z_jk − Σ_l Σ_c B_jl(k, c) Z_lc contributes (r rᵀ) / τ.
    let mut row: Vec<(usize, f64)> = Vec::new();
    for j in 0..p {
        for kk in 0..k {
            row.clear();
            row.push((j * k + kk, 1.0));
            for &l in &parents[j] {
                let b = state.effects.get(j, l).expect("block on every edge");
                for c in 0..k {
                    row.push((l * k + c, -b[(kk, c)]));
                }
            }
            let inv = 1.0 / state.active_variance(i, j, kk);
            for &(r1, v1) in &row {
                for &(r2, v2) in &row {
                    q[(r1, r2)] += v1 * v2 * inv;
                }
            }
        }
    }
    GaussianPrecision::from_canonical(q, &lin)
}

/// Unnormalized log probabilities of `c_ijk = m` given `ε_ijk = eps`.
pub fn assignment_log_weights(state: &ModelState, j: usize, k: usize, eps: f64) -> Vec<f64> {
    let jk = state.jk(j, k);
    state.noise.weights[jk]
        .iter()
        .zip(&state.noise.variances[jk])
        .map(|(w, t)| w.ln() + normal_ln_pdf(eps, *t))
        .collect()
}

/// Component counts and residual sums of squares for one `(j, k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureStats {
    pub counts: Vec<f64>,
    pub sum_squares: Vec<f64>,
}

impl MixtureStats {
    pub fn new(m: usize) -> Self {
        Self {
            counts: vec![0.0; m],
            sum_squares: vec![0.0; m],
        }
    }

    pub fn add(&mut self, component: usize, eps: f64) {
        self.counts[component] += 1.0;
        self.sum_squares[component] += eps * eps;
    }

    /// Dirichlet parameters of the weights.
    pub fn weight_conditional(&self, hp: &Hyperparameters) -> Vec<f64> {
        self.counts.iter().map(|c| hp.alpha + c).collect()
    }

    pub fn variance_conditional(&self, hp: &Hyperparameters, m: usize) -> InverseGamma {
        InverseGamma::new(hp.a_tau + 0.5 * self.counts[m], hp.b_tau + 0.5 * self.sum_squares[m])
    }
}

/// Sufficient statistics of `(j, k)` under the current assignments.
pub fn mixture_stats(state: &ModelState, residuals: &[DMatrix<f64>], j: usize, k: usize) -> MixtureStats {
    let mut st = MixtureStats::new(state.noise.m);
    for (i, eps) in residuals.iter().enumerate() {
        st.add(state.noise.assignments[state.ijk(i, j, k)], eps[(j, k)]);
    }
    st
}

/// `n × |pa|K` design whose row `i` stacks `Z_il` over the parents `l`.
pub(crate) fn parent_design(state: &ModelState, parents: &[usize]) -> DMatrix<f64> {
    let k = state.k();
    DMatrix::from_fn(state.n(), parents.len() * k, |i, col| state.z[i][(parents[col / k], col % k)])
}

/// Heteroscedastic regression of `Z_{·jk}` on the parent design with prior
/// `N(0, γI)`: returns `(XᵀD⁻¹X + I/γ, XᵀD⁻¹y, yᵀD⁻¹y, log det D)`.
fn row_system(state: &ModelState, j: usize, k: usize, x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, f64, f64) {
    let n = state.n();
    let q = x.ncols();
    let mut xw = x.clone();
    let mut yw = DVector::zeros(n);
    let mut log_det = 0.0;
    for i in 0..n {
        let d = state.active_variance(i, j, k);
        let s = d.sqrt();
        log_det += d.ln();
        yw[i] = state.z[i][(j, k)] / s;
        xw.row_mut(i).unscale_mut(s);
    }
    let mut prec = xw.tr_mul(&xw);
    for c in 0..q {
        prec[(c, c)] += 1.0 / state.effects.gamma;
    }
    let lin = xw.tr_mul(&yw);
    (prec, lin, yw.norm_squared(), log_det)
}

/// Precision and linear term of the effect-row conditional for a given design.
pub(crate) fn row_precision(state: &ModelState, j: usize, k: usize, x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let (prec, lin, _, _) = row_system(state, j, k, x);
    (prec, lin)
}

/// Conditional of row `k` of `[B_{j l_1}, B_{j l_2}, …]` over the current
/// parents (in increasing index order); `None` when `j` has no parents.
pub fn effect_row_conditional(state: &ModelState, j: usize, k: usize) -> Result<Option<GaussianPrecision>> {
    let parents = state.dag.parents(j);
    if parents.is_empty() {
        return Ok(None);
    }
    let x = parent_design(state, &parents);
    let (prec, lin, _, _) = row_system(state, j, k, &x);
    GaussianPrecision::from_canonical(prec, &lin).map(Some)
}

/// `log p(Z_{·j·} | Z_parents, c, τ, γ)` with the effect blocks integrated
/// out, for a hypothetical parent set.
pub fn node_log_marginal(state: &ModelState, j: usize, parents: &[usize]) -> Result<f64> {
    let n = state.n() as f64;
    let x = parent_design(state, parents);
    let q = x.ncols() as f64;
    let mut total = 0.0;
    for k in 0..state.k() {
        let (prec, lin, yy, log_det_d) = row_system(state, j, k, &x);
        if parents.is_empty() {
            total += -0.5 * (n * LN_2PI + log_det_d + yy);
            continue;
        }
        let g = GaussianPrecision::from_canonical(prec, &lin)?;
        // Woodbury: det(D + γXXᵀ) = det D · γ^q · det Λ, quadratic yᵀD⁻¹y − bᵀΛ⁻¹b.
        let quad = yy - lin.dot(&g.mean);
        let log_det = log_det_d + q * state.effects.gamma.ln() + g.log_det_precision();
        total += -0.5 * (n * LN_2PI + log_det + quad);
    }
    Ok(total)
}

/// Beta parameters of `r`.
pub fn r_conditional(state: &ModelState, hp: &Hyperparameters) -> (f64, f64) {
    let p = state.p();
    let s = state.dag.edge_count() as f64;
    let pairs = (p * p.saturating_sub(1)) as f64;
    (hp.a_r + s, hp.b_r + pairs - s)
}

/// Log prior ratio of a graph with `s_new` edges against one with `s_old`.
pub fn edge_prior_log_odds(state: &ModelState, hp: &Hyperparameters, mode: EdgePrior, s_new: usize, s_old: usize) -> f64 {
    let p = state.p();
    log_edge_prior_counts(s_new, p, state.r, hp, mode) - log_edge_prior_counts(s_old, p, state.r, hp, mode)
}

/// `G Ãᵀ` (`L × K`) per distinct grid.
pub(crate) fn gram_times_basis(cache: &DataCache, basis: &AdaptiveBasis<f64>) -> Vec<DMatrix<f64>> {
    let at = basis.coefficients.transpose();
    cache.grams().iter().map(|g| g * &at).collect()
}

/// Conditional of `Ã_k` before the projection step.
pub fn basis_conditional(cache: &DataCache, state: &ModelState, k: usize) -> Result<GaussianPrecision> {
    basis_conditional_with(cache, state, &gram_times_basis(cache, &state.basis), k)
}

pub(crate) fn basis_conditional_with(
    cache: &DataCache,
    state: &ModelState,
    ga: &[DMatrix<f64>],
    k: usize,
) -> Result<GaussianPrecision> {
    let l = state.basis.dim();
    let mut weight = vec![0.0; cache.grams().len()];
    let mut lin = DVector::<f64>::zeros(l);
    for i in 0..state.n() {
        for j in 0..state.p() {
            let c = cache.curve(i, j);
            let s = state.sigma[j];
            let mut z: DVector<f64> = state.z[i].row(j).transpose();
            let zk = z[k];
            weight[c.grid] += zk * zk / s;
            z[k] = 0.0;
            let partial = &c.h - &ga[c.grid] * z;
            lin.axpy(zk / s, &partial, 1.0);
        }
    }
    let prior = state.basis.prior_variance(k);
    let mut prec = DMatrix::from_diagonal(&prior.map(|v| 1.0 / v));
    for (g, w) in cache.grams().iter().zip(&weight) {
        if *w != 0.0 {
            prec += g * *w;
        }
    }
    GaussianPrecision::from_canonical(prec, &lin)
}

/// Conditional of `λ_k`: the `N(0, 1/λ_k)` prior on the `L − 2` penalized
/// coordinates gives a Gamma kernel, truncated to keep the ordering.
pub fn lambda_conditional(basis: &AdaptiveBasis<f64>, k: usize) -> TruncatedGamma {
    let l = basis.dim();
    let rough: f64 = (2..l).map(|c| basis.coefficients[(k, c)].powi(2)).sum();
    let hi = if k == 0 { LAMBDA_MAX } else { basis.lambda[k - 1] };
    let lo = if k + 1 == basis.k() { LAMBDA_MIN } else { basis.lambda[k + 1] };
    TruncatedGamma {
        shape: 0.5 * (l - 2) as f64 + 1.0,
        rate: 0.5 * rough,
        lo,
        hi,
    }
}

/// Conditionals of the observation-noise variances.
pub fn sigma_conditionals(cache: &DataCache, state: &ModelState, hp: &Hyperparameters) -> Vec<InverseGamma> {
    sigma_conditionals_with(cache, state, hp, &cache.projected_grams(&state.basis))
}

pub(crate) fn sigma_conditionals_with(
    cache: &DataCache,
    state: &ModelState,
    hp: &Hyperparameters,
    projected: &[DMatrix<f64>],
) -> Vec<InverseGamma> {
    let rss = cache.residual_sum_squares(state, projected);
    (0..state.p())
        .map(|j| InverseGamma::new(hp.a_sigma + 0.5 * cache.points(j) as f64, hp.b_sigma + 0.5 * rss[j]))
        .collect()
}

/// Conditional of the slab variance `γ`.
pub fn gamma_conditional(state: &ModelState, hp: &Hyperparameters) -> InverseGamma {
    InverseGamma::new(
        hp.a_gamma + 0.5 * state.effects.slab_entries() as f64,
        hp.b_gamma + 0.5 * state.effects.sum_squares(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Dag;
    use crate::model::fixtures::{random_instance, InstanceSize};
    use crate::model::{Curve, EffectBlocks, FunctionalDataset, MixtureNoise};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Two nodes, `K = 1`, edge 0 -> 1 with effect `b`, unit mixture weights.
    fn bivariate(n: usize, b: f64, tau: [f64; 2]) -> ModelState {
        let size = InstanceSize { n, p: 2, k: 1, m: 1, n_splines: 6, max_points: 1 };
        let (_, mut s) = random_instance(size, &mut rng(1));
        s.dag = Dag::from_edges(2, &[(0, 1)]).unwrap();
        s.effects = EffectBlocks::zeros(2, 1, 1.0);
        s.effects.set(1, 0, DMatrix::from_element(1, 1, b));
        s.noise = MixtureNoise {
            m: 1,
            weights: vec![vec![1.0]; 2],
            variances: vec![vec![tau[0]], vec![tau[1]]],
            assignments: vec![0; n * 2],
        };
        s
    }

    #[test]
    fn latent_prior_limit_matches_sem_covariance() {
        let (b, tau) = (0.8, [0.5, 1.5]);
        let mut s = bivariate(1, b, tau);
        let (ds, _) = random_instance(InstanceSize { n: 1, p: 2, k: 1, m: 1, n_splines: 6, max_points: 3 }, &mut rng(2));
        s.sigma = vec![1e14; 2];
        let cache = DataCache::new(&ds, &s.penalty).unwrap();
        let cond = z_conditional(&cache, &s, &cache.projected_grams(&s.basis), 0).unwrap();
        let mut r = rng(3);
        let draws = 100_000;
        let (mut s00, mut s01, mut s11) = (0.0, 0.0, 0.0);
        for _ in 0..draws {
            let x = cond.sample(&mut r);
            s00 += x[0] * x[0];
            s01 += x[0] * x[1];
            s11 += x[1] * x[1];
        }
        let d = draws as f64;
        // (I − B)⁻¹ T (I − B)⁻ᵀ for Z1 = ε1, Z2 = b Z1 + ε2
        let want = [tau[0], b * tau[0], b * b * tau[0] + tau[1]];
        for (got, w) in [s00 / d, s01 / d, s11 / d].iter().zip(want) {
            assert!((got - w).abs() < 0.03 * w.max(0.5), "{got} vs {w}");
        }
    }

    #[test]
    fn latent_data_limit_inverts_the_design() {
        let size = InstanceSize { n: 1, p: 1, k: 2, m: 1, n_splines: 6, max_points: 1 };
        let (_, mut s) = random_instance(size, &mut rng(4));
        s.sigma = vec![1e-12];
        let grid = vec![0.2, 0.7];
        let phi = s.basis.functions_on_grid(&s.penalty, &grid).unwrap();
        let values = vec![1.5, -0.5];
        let ds = FunctionalDataset::new(
            vec!["f".into()],
            vec!["s".into()],
            vec![Curve::new(grid, values.clone()).unwrap()],
        )
        .unwrap();
        let cache = DataCache::new(&ds, &s.penalty).unwrap();
        let cond = z_conditional(&cache, &s, &cache.projected_grams(&s.basis), 0).unwrap();
        let want = phi.lu().solve(&DVector::from_vec(values)).unwrap();
        assert!((&cond.mean - want).amax() < 1e-6);
    }

    #[test]
    fn single_component_variance_is_conjugate_update() {
        let s = bivariate(4, 0.0, [1.0, 1.0]);
        let hp = Hyperparameters { m: 1, ..Default::default() };
        let eps = residuals(&s).unwrap();
        let st = mixture_stats(&s, &eps, 0, 0);
        let ss: f64 = eps.iter().map(|e| e[(0, 0)].powi(2)).sum();
        let ig = st.variance_conditional(&hp, 0);
        assert_eq!(ig.shape, 1.0 + 2.0);
        assert!((ig.scale - (1.0 + ss / 2.0)).abs() < 1e-12);
        assert_eq!(st.weight_conditional(&hp), vec![5.0]);
    }

    #[test]
    fn assignment_at_zero_residual() {
        let (_, mut s) = random_instance(InstanceSize { m: 3, ..Default::default() }, &mut rng(5));
        s.noise.weights[0] = vec![0.2, 0.3, 0.5];
        s.noise.variances[0] = vec![0.5, 1.0, 4.0];
        let w = assignment_log_weights(&s, 0, 0, 0.0);
        for m in 1..3 {
            let want = (s.noise.weights[0][m] / s.noise.variances[0][m].sqrt()).ln()
                - (s.noise.weights[0][0] / s.noise.variances[0][0].sqrt()).ln();
            assert!((w[m] - w[0] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn no_parents_means_no_effect_conditional() {
        let s = bivariate(3, 0.5, [1.0, 1.0]);
        assert!(effect_row_conditional(&s, 0, 0).unwrap().is_none());
        assert!(effect_row_conditional(&s, 1, 0).unwrap().is_some());
    }

    #[test]
    fn single_parent_matches_normal_normal_posterior() {
        let mut s = bivariate(6, 0.3, [1.0, 0.7]);
        s.effects.gamma = 2.0;
        let cond = effect_row_conditional(&s, 1, 0).unwrap().unwrap();
        let x: Vec<f64> = s.z.iter().map(|z| z[(0, 0)]).collect();
        let y: Vec<f64> = s.z.iter().map(|z| z[(1, 0)]).collect();
        let var = 1.0 / (x.iter().map(|v| v * v).sum::<f64>() / 0.7 + 1.0 / 2.0);
        let mean = var * x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / 0.7;
        assert!((cond.mean[0] - mean).abs() < 1e-12);
        assert!((cond.covariance()[(0, 0)] - var).abs() < 1e-12);
    }

    #[test]
    fn flat_slab_gives_least_squares() {
        let mut s = bivariate(8, 0.3, [1.0, 1.0]);
        s.effects.gamma = 1e12;
        let cond = effect_row_conditional(&s, 1, 0).unwrap().unwrap();
        let x: Vec<f64> = s.z.iter().map(|z| z[(0, 0)]).collect();
        let y: Vec<f64> = s.z.iter().map(|z| z[(1, 0)]).collect();
        let ols = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / x.iter().map(|v| v * v).sum::<f64>();
        assert!((cond.mean[0] - ols).abs() < 1e-9);
    }

    #[test]
    fn edge_probability_conditionals() {
        let hp = Hyperparameters::default();
        let (_, mut s) = random_instance(InstanceSize::default(), &mut rng(6));
        s.dag = Dag::empty(3);
        s.effects = EffectBlocks::zeros(3, s.k(), 1.0);
        assert_eq!(r_conditional(&s, &hp), (1.0, 7.0));
        s.dag = Dag::from_edges(3, &[(0, 1), (0, 2), (1, 2)]).unwrap();
        assert_eq!(r_conditional(&s, &hp), (4.0, 4.0));
        let size = InstanceSize { p: 30, k: 1, n: 1, ..Default::default() };
        let (_, mut big) = random_instance(size, &mut rng(7));
        big.dag = Dag::empty(30);
        assert_eq!(r_conditional(&big, &hp), (1.0, 871.0));
    }

    #[test]
    fn marginal_prior_odds_for_one_edge() {
        let hp = Hyperparameters::default();
        let size = InstanceSize { p: 30, k: 1, n: 1, ..Default::default() };
        let (_, s) = random_instance(size, &mut rng(8));
        let odds = edge_prior_log_odds(&s, &hp, EdgePrior::Marginal, 0, 1).exp();
        assert!((odds - 870.0).abs() < 1e-8);
    }

    #[test]
    fn smoothness_conditional_without_roughness() {
        let (_, mut s) = random_instance(InstanceSize { k: 3, ..Default::default() }, &mut rng(9));
        for c in 2..s.basis.dim() {
            s.basis.coefficients[(1, c)] = 0.0;
        }
        let tg = lambda_conditional(&s.basis, 1);
        assert_eq!(tg.rate, 0.0);
        assert_eq!(tg.shape, 0.5 * (s.basis.dim() - 2) as f64 + 1.0);
        assert_eq!((tg.lo, tg.hi), (s.basis.lambda[2], s.basis.lambda[0]));
        let mut r = rng(10);
        for _ in 0..200 {
            let v = tg.sample(&mut r);
            assert!(v > tg.lo && v < tg.hi);
        }
    }

    #[test]
    fn noise_conditionals_at_zero_residual_and_empty_graph() {
        let size = InstanceSize { n: 2, p: 2, k: 1, m: 2, n_splines: 6, max_points: 4 };
        let (ds, mut s) = random_instance(size, &mut rng(11));
        // data generated exactly from the state
        let mut curves = Vec::new();
        for i in 0..2 {
            for j in 0..2 {
                let c = ds.curve(i, j);
                let phi = s.basis.functions_on_grid(&s.penalty, &c.grid).unwrap();
                let y = phi * s.z[i].row(j).transpose();
                curves.push(Curve::new(c.grid.clone(), y.as_slice().to_vec()).unwrap());
            }
        }
        let exact = FunctionalDataset::new(ds.labels().to_vec(), ds.subjects().to_vec(), curves).unwrap();
        let hp = Hyperparameters::default();
        let cache = DataCache::new(&exact, &s.penalty).unwrap();
        for (j, ig) in sigma_conditionals(&cache, &s, &hp).iter().enumerate() {
            assert_eq!(ig.shape, hp.a_sigma + 0.5 * exact.total_points(j) as f64);
            assert!((ig.scale - hp.b_sigma).abs() < 1e-10);
        }
        s.dag = Dag::empty(2);
        s.effects = EffectBlocks::zeros(2, 1, 0.7);
        let g = gamma_conditional(&s, &hp);
        assert_eq!((g.shape, g.scale), (hp.a_gamma, hp.b_gamma));
    }
}

//! Log densities of the observation model, the latent SEM and the priors.
//!
//! These are written directly from the model definition and serve as the
//! reference the sampler's cached computations are audited against.

use nalgebra::DMatrix;
use statrs::function::beta::ln_beta;

use super::dataset::FunctionalDataset;
use super::state::{EdgePrior, EffectBlocks, Hyperparameters, ModelState};
use crate::error::{Error, Result};
use crate::graph::{is_acyclic, Dag};
use crate::splines::{basis_functions_on_grid, lambda_ordered, AdaptiveBasis};
use crate::stats::{beta_ln_pdf, dirichlet_ln_pdf, log_sum_exp, normal_ln_pdf, InverseGamma};

/// Exogenous residuals `ε_j = Z_j − Σ_{l ∈ pa(j)} B_{jl} Z_l` for one subject
/// (`z_i` is `p × K`, one row per function).
pub fn sem_residual(z_i: &DMatrix<f64>, effects: &EffectBlocks, dag: &Dag) -> Result<DMatrix<f64>> {
    let p = dag.p();
    if z_i.nrows() != p || z_i.ncols() != effects.k() {
        return Err(Error::DimensionMismatch(format!(
            "latent coefficients are {}x{}, expected {p}x{}",
            z_i.nrows(),
            z_i.ncols(),
            effects.k()
        )));
    }
    let mut eps = z_i.clone();
    for j in 0..p {
        for l in dag.parents(j) {
            let b = effects
                .get(j, l)
                .ok_or_else(|| Error::InvalidState(format!("missing effect block {l} -> {j}")))?;
            let contrib = b * z_i.row(l).transpose();
            for k in 0..eps.ncols() {
                eps[(j, k)] -= contrib[k];
            }
        }
    }
    Ok(eps)
}

/// `Σ_{i,j,m} log N(W_ij(m) − Φ_ij(m) Z_ij; 0, σ_j)`.
pub fn loglik_observation(dataset: &FunctionalDataset, state: &ModelState) -> Result<f64> {
    if let Some(s) = state.sigma.iter().find(|&&s| !(s > 0.0)) {
        return Err(Error::InvalidState(format!("observation variance {s} must be positive")));
    }
    if dataset.n() != state.n() || dataset.p() != state.p() {
        return Err(Error::DimensionMismatch("dataset and state sizes differ".into()));
    }
    let mut total = 0.0;
    for i in 0..dataset.n() {
        for j in 0..dataset.p() {
            let curve = dataset.curve(i, j);
            let phi = basis_functions_on_grid(&state.basis, &state.penalty, &curve.grid)?;
            let fitted = phi * state.z[i].row(j).transpose();
            for (w, f) in curve.values.iter().zip(fitted.iter()) {
                total += normal_ln_pdf(w - f, state.sigma[j]);
            }
        }
    }
    Ok(total)
}

/// Mixture log likelihood of the residuals with assignments summed out.
pub fn loglik_latent(state: &ModelState) -> Result<f64> {
    let mut total = 0.0;
    let mut terms = vec![0.0; state.noise.m];
    for i in 0..state.n() {
        let eps = sem_residual(&state.z[i], &state.effects, &state.dag)?;
        for j in 0..state.p() {
            for k in 0..state.k() {
                let jk = state.jk(j, k);
                let (w, t) = (&state.noise.weights[jk], &state.noise.variances[jk]);
                for m in 0..state.noise.m {
                    terms[m] = w[m].ln() + normal_ln_pdf(eps[(j, k)], t[m]);
                }
                total += log_sum_exp(&terms);
            }
        }
    }
    Ok(total)
}

/// Log likelihood of the residuals given the component assignments.
pub fn loglik_latent_given_assignments(state: &ModelState) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..state.n() {
        let eps = sem_residual(&state.z[i], &state.effects, &state.dag)?;
        for j in 0..state.p() {
            for k in 0..state.k() {
                total += normal_ln_pdf(eps[(j, k)], state.active_variance(i, j, k));
            }
        }
    }
    Ok(total)
}

/// `Σ log π_{jk c_ijk}`.
pub fn log_assignment_prior(state: &ModelState) -> f64 {
    let mut total = 0.0;
    for i in 0..state.n() {
        for j in 0..state.p() {
            for k in 0..state.k() {
                let c = state.noise.assignments[state.ijk(i, j, k)];
                total += state.noise.weights[state.jk(j, k)][c].ln();
            }
        }
    }
    total
}

/// Graph prior for a 0/1 adjacency matrix; `−∞` when it is cyclic.
pub fn log_edge_prior(adjacency: &[Vec<u8>], r: f64, hp: &Hyperparameters, mode: EdgePrior) -> Result<f64> {
    if !is_acyclic(adjacency)? {
        return Ok(f64::NEG_INFINITY);
    }
    let p = adjacency.len();
    let s = adjacency.iter().flatten().filter(|&&v| v == 1).count();
    Ok(log_edge_prior_counts(s, p, r, hp, mode))
}

/// Graph prior in terms of the edge count `s` on `p` nodes.
pub fn log_edge_prior_counts(s: usize, p: usize, r: f64, hp: &Hyperparameters, mode: EdgePrior) -> f64 {
    let pairs = (p * p.saturating_sub(1)) as f64;
    let s = s as f64;
    match mode {
        EdgePrior::SampledR => {
            s * r.ln() + (pairs - s) * (1.0 - r).ln() + beta_ln_pdf(r, hp.a_r, hp.b_r)
        }
        EdgePrior::Marginal => ln_beta(s + hp.a_r, pairs - s + hp.b_r) - ln_beta(hp.a_r, hp.b_r),
    }
}

/// `Σ_k log N(Ã_k; 0, S_k)`, or `−∞` if the smoothness parameters are not
/// strictly ordered inside their bounds.
pub fn log_basis_prior(basis: &AdaptiveBasis<f64>) -> f64 {
    if !lambda_ordered(&basis.lambda) {
        return f64::NEG_INFINITY;
    }
    let mut total = 0.0;
    for k in 0..basis.k() {
        let var = basis.prior_variance(k);
        for (l, v) in var.iter().enumerate() {
            total += normal_ln_pdf(basis.coefficients[(k, l)], *v);
        }
    }
    total
}

/// Slab density of the present blocks plus the inverse-gamma prior on `gamma`.
pub fn log_effect_prior(effects: &EffectBlocks, hp: &Hyperparameters) -> f64 {
    let gamma = effects.gamma;
    let n = effects.slab_entries() as f64;
    -0.5 * n * (crate::stats::LN_2PI + gamma.ln()) - 0.5 * effects.sum_squares() / gamma
        + InverseGamma::new(hp.a_gamma, hp.b_gamma).ln_pdf(gamma)
}

pub fn log_mixture_prior(state: &ModelState, hp: &Hyperparameters) -> f64 {
    let alpha = vec![hp.alpha; state.noise.m];
    let tau_prior = InverseGamma::new(hp.a_tau, hp.b_tau);
    let mut total = 0.0;
    for (w, t) in state.noise.weights.iter().zip(&state.noise.variances) {
        total += dirichlet_ln_pdf(w, &alpha);
        total += t.iter().map(|&v| tau_prior.ln_pdf(v)).sum::<f64>();
    }
    total
}

pub fn log_sigma_prior(sigma: &[f64], hp: &Hyperparameters) -> f64 {
    let prior = InverseGamma::new(hp.a_sigma, hp.b_sigma);
    sigma.iter().map(|&s| prior.ln_pdf(s)).sum()
}

/// Sum of all prior log densities.
pub fn log_prior(state: &ModelState, hp: &Hyperparameters, mode: EdgePrior) -> f64 {
    let edge = log_edge_prior_counts(state.dag.edge_count(), state.p(), state.r, hp, mode);
    log_basis_prior(&state.basis)
        + edge
        + log_effect_prior(&state.effects, hp)
        + log_mixture_prior(state, hp)
        + log_sigma_prior(&state.sigma, hp)
}

/// Log joint density with the mixture assignments marginalized.
pub fn log_joint(
    dataset: &FunctionalDataset,
    state: &ModelState,
    hp: &Hyperparameters,
    mode: EdgePrior,
) -> Result<f64> {
    Ok(loglik_observation(dataset, state)? + loglik_latent(state)? + log_prior(state, hp, mode))
}

/// Log joint density including the mixture assignments.
pub fn log_joint_augmented(
    dataset: &FunctionalDataset,
    state: &ModelState,
    hp: &Hyperparameters,
    mode: EdgePrior,
) -> Result<f64> {
    Ok(loglik_observation(dataset, state)?
        + loglik_latent_given_assignments(state)?
        + log_assignment_prior(state)
        + log_prior(state, hp, mode))
}

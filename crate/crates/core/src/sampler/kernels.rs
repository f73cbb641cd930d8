//! One Gibbs or Metropolis step per parameter block.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use super::cache::DataCache;
use super::conditionals::{
    assignment_log_weights, basis_conditional_with, gamma_conditional, gram_times_basis,
    lambda_conditional, parent_design, MixtureStats, parent_lists, r_conditional, residuals,
    sigma_conditionals_with, z_conditional_with,
};
use super::rng::{Block, SweepStreams};
use crate::error::{Error, Result};
use crate::model::{EdgePrior, Hyperparameters, ModelState};
use crate::splines::project_and_normalize;
use crate::stats::{sample_beta, sample_dirichlet, sample_log_categorical, GaussianPrecision};

/// Attempts at a non-degenerate basis proposal before keeping the old vector.
const BASIS_ATTEMPTS: usize = 10;

pub fn update_latent(state: &mut ModelState, cache: &DataCache, streams: SweepStreams) -> Result<()> {
    let projected = cache.projected_grams(&state.basis);
    let parents = parent_lists(state);
    let (p, k) = (state.p(), state.k());
    let shared = &*state;
    let draws: Result<Vec<DMatrix<f64>>> = (0..shared.n())
        .into_par_iter()
        .map(|i| {
            let cond = z_conditional_with(cache, shared, &projected, &parents, i)?;
            let v = cond.sample(&mut streams.site(Block::Latent, i as u64));
            Ok(DMatrix::from_row_slice(p, k, v.as_slice()))
        })
        .collect();
    state.z = draws?;
    Ok(())
}

/// Assignments, then weights, then component variances, per `(j, k)`.
pub fn update_mixture(state: &mut ModelState, hp: &Hyperparameters, streams: SweepStreams) -> Result<()> {
    let eps = residuals(state)?;
    let (n, p, k, m) = (state.n(), state.p(), state.k(), state.noise.m);
    let shared = &*state;
    let sites: Vec<(Vec<usize>, Vec<f64>, Vec<f64>)> = (0..p * k)
        .into_par_iter()
        .map(|jk| {
            let (j, kk) = (jk / k, jk % k);
            let mut rng = streams.site(Block::Mixture, jk as u64);
            let mut stats = MixtureStats::new(m);
            let labels: Vec<usize> = (0..n)
                .map(|i| {
                    let e = eps[i][(j, kk)];
                    let c = sample_log_categorical(&assignment_log_weights(shared, j, kk, e), &mut rng);
                    stats.add(c, e);
                    c
                })
                .collect();
            let weights = sample_dirichlet(&stats.weight_conditional(hp), &mut rng);
            let variances = (0..m).map(|c| stats.variance_conditional(hp, c).sample(&mut rng)).collect();
            (labels, weights, variances)
        })
        .collect();
    for (jk, (labels, weights, variances)) in sites.into_iter().enumerate() {
        let (j, kk) = (jk / k, jk % k);
        for (i, c) in labels.into_iter().enumerate() {
            let idx = state.ijk(i, j, kk);
            state.noise.assignments[idx] = c;
        }
        state.noise.weights[jk] = weights;
        state.noise.variances[jk] = variances;
    }
    Ok(())
}

/// Redraws every effect block into node `j` from its conditional given the
/// current parents.
pub fn draw_child_effects<R: Rng + ?Sized>(state: &mut ModelState, j: usize, rng: &mut R) -> Result<()> {
    let p = state.p();
    let k = state.k();
    for l in 0..p {
        state.effects.clear(j, l);
    }
    let parents = state.dag.parents(j);
    if parents.is_empty() {
        return Ok(());
    }
    let x = parent_design(state, &parents);
    let mut blocks = vec![DMatrix::<f64>::zeros(k, k); parents.len()];
    for kk in 0..k {
        let (prec, lin) = super::conditionals::row_precision(state, j, kk, &x);
        let beta = GaussianPrecision::from_canonical(prec, &lin)?.sample(rng);
        for (idx, block) in blocks.iter_mut().enumerate() {
            for c in 0..k {
                block[(kk, c)] = beta[idx * k + c];
            }
        }
    }
    for (l, block) in parents.into_iter().zip(blocks) {
        state.effects.set(j, l, block);
    }
    Ok(())
}

pub fn update_effects(state: &mut ModelState, streams: SweepStreams) -> Result<()> {
    for j in 0..state.p() {
        let mut rng = streams.site(Block::Effects, j as u64);
        draw_child_effects(state, j, &mut rng)?;
    }
    Ok(())
}

pub fn update_edge_probability(state: &mut ModelState, hp: &Hyperparameters, mode: EdgePrior, streams: SweepStreams) {
    if mode == EdgePrior::SampledR {
        let (a, b) = r_conditional(state, hp);
        state.r = sample_beta(a, b, &mut streams.block(Block::EdgeProbability));
    }
}

/// Draws each `Ã_k` from its conditional, projects it off the other basis
/// vectors and normalizes it, then draws `λ_k`.
pub fn update_basis(state: &mut ModelState, cache: &DataCache, streams: SweepStreams) -> Result<()> {
    let k = state.k();
    let mut ga = gram_times_basis(cache, &state.basis);
    let j = state.penalty.gram().clone();
    for kk in 0..k {
        let mut rng = streams.site(Block::Basis, kk as u64);
        let cond = basis_conditional_with(cache, state, &ga, kk)?;
        let others: Vec<_> = (0..k).filter(|&h| h != kk).map(|h| state.basis.coefficient(h)).collect();
        for _ in 0..BASIS_ATTEMPTS {
            let proposal = cond.sample(&mut rng);
            match project_and_normalize(&proposal, &others, &j) {
                Ok(v) => {
                    state.basis.set_coefficient(kk, &v);
                    break;
                }
                Err(Error::Collinear { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        let a = state.basis.coefficient(kk);
        for (g, gram) in ga.iter_mut().zip(cache.grams()) {
            g.set_column(kk, &(gram * &a));
        }
        state.basis.lambda[kk] = lambda_conditional(&state.basis, kk).sample(&mut rng);
    }
    Ok(())
}

pub fn update_noise(state: &mut ModelState, cache: &DataCache, hp: &Hyperparameters, streams: SweepStreams) {
    let mut rng = streams.block(Block::Noise);
    let projected = cache.projected_grams(&state.basis);
    let conds = sigma_conditionals_with(cache, state, hp, &projected);
    for (s, c) in state.sigma.iter_mut().zip(conds) {
        *s = c.sample(&mut rng);
    }
    state.effects.gamma = gamma_conditional(state, hp).sample(&mut rng);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Dag;
    use crate::model::fixtures::{random_instance, InstanceSize};
    use crate::model::{EffectBlocks, MixtureNoise};
    use crate::splines::lambda_ordered;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn streams(iteration: u64) -> SweepStreams {
        SweepStreams { seed: 5, chain: 0, iteration }
    }

    #[test]
    fn separated_variance_clusters_are_recovered() {
        let n = 500;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let size = InstanceSize { n, p: 1, k: 1, m: 2, n_splines: 6, max_points: 1 };
        let (_, mut s) = random_instance(size, &mut rng);
        let truth: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let tau: [f64; 2] = [0.01, 100.0];
        for (i, &c) in truth.iter().enumerate() {
            s.z[i][(0, 0)] = tau[c].sqrt() * crate::stats::standard_normal(&mut rng);
        }
        s.noise = MixtureNoise {
            m: 2,
            weights: vec![vec![0.5, 0.5]],
            variances: vec![tau.to_vec()],
            assignments: vec![0; n],
        };
        let hp = Hyperparameters { m: 2, ..Default::default() };
        update_mixture(&mut s, &hp, streams(0)).unwrap();
        let correct = s.noise.assignments.iter().zip(&truth).filter(|(a, b)| a == b).count();
        assert!(correct as f64 > 0.9 * n as f64, "{correct} of {n}");
        s.noise.validate(n, 1, 1).unwrap();
    }

    #[test]
    fn basis_update_keeps_orthonormality_and_ordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for it in 0..20 {
            let size = InstanceSize { k: 3, n_splines: 9, max_points: 8, ..Default::default() };
            let (ds, mut s) = random_instance(size, &mut rng);
            let cache = DataCache::new(&ds, &s.penalty).unwrap();
            update_basis(&mut s, &cache, streams(it)).unwrap();
            assert!(s.basis.orthonormality_error(s.penalty.gram()) <= 1e-10);
            assert!(lambda_ordered(&s.basis.lambda));
        }
    }

    #[test]
    fn sweeps_preserve_state_validity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (ds, mut s) = random_instance(InstanceSize::default(), &mut rng);
        let hp = Hyperparameters { m: s.noise.m, k: s.k(), n_splines: s.basis.dim(), ..Default::default() };
        let cache = DataCache::new(&ds, &s.penalty).unwrap();
        for it in 0..50 {
            let st = streams(it);
            update_latent(&mut s, &cache, st).unwrap();
            update_mixture(&mut s, &hp, st).unwrap();
            update_effects(&mut s, st).unwrap();
            update_edge_probability(&mut s, &hp, EdgePrior::SampledR, st);
            update_basis(&mut s, &cache, st).unwrap();
            update_noise(&mut s, &cache, &hp, st);
            s.validate().unwrap();
        }
    }

    #[test]
    fn effects_without_parents_are_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (_, mut s) = random_instance(InstanceSize::default(), &mut rng);
        s.dag = Dag::empty(s.p());
        s.effects = EffectBlocks::zeros(s.p(), s.k(), 1.0);
        update_effects(&mut s, streams(0)).unwrap();
        assert_eq!(s.effects.slab_entries(), 0);
    }

    #[test]
    fn marginal_mode_leaves_r_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (_, mut s) = random_instance(InstanceSize::default(), &mut rng);
        let r = s.r;
        update_edge_probability(&mut s, &Hyperparameters::default(), EdgePrior::Marginal, streams(0));
        assert_eq!(s.r, r);
        update_edge_probability(&mut s, &Hyperparameters::default(), EdgePrior::SampledR, streams(0));
        assert_ne!(s.r, r);
    }
}

//! Randomized small model instances for density audits and property tests.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Curve, EffectBlocks, FunctionalDataset, MixtureNoise, ModelState};
use crate::graph::random_er_dag;
use crate::splines::{orthonormalize, AdaptiveBasis, PenaltySystem};
use crate::stats::{sample_dirichlet, standard_normal};

/// Sizes of a random instance.
#[derive(Clone, Copy, Debug)]
pub struct InstanceSize {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub m: usize,
    pub n_splines: usize,
    /// Maximum points per curve (at least 1 per curve is drawn).
    pub max_points: usize,
}

impl Default for InstanceSize {
    fn default() -> Self {
        Self {
            n: 4,
            p: 3,
            k: 2,
            m: 3,
            n_splines: 8,
            max_points: 6,
        }
    }
}

/// A random state with valid invariants and a random dataset of matching
/// shape (uneven grids, values unrelated to the state).
pub fn random_instance<R: Rng + ?Sized>(size: InstanceSize, rng: &mut R) -> (FunctionalDataset, ModelState) {
    let InstanceSize { n, p, k, m, n_splines, max_points } = size;
    let penalty = Arc::new(PenaltySystem::<f64>::cubic(n_splines).expect("valid spline count"));
    let raw = DMatrix::from_fn(k, n_splines, |_, _| StandardNormal.sample(rng));
    let coefficients = orthonormalize(&raw, penalty.gram()).expect("random vectors are independent");
    let mut lambda: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..100.0)).collect();
    lambda.sort_by(|a, b| b.total_cmp(a));
    for i in 1..k {
        if lambda[i] >= lambda[i - 1] {
            lambda[i] = lambda[i - 1] * 0.9;
        }
    }
    let basis = AdaptiveBasis::new(coefficients, lambda).expect("matching sizes");

    let dag = random_er_dag(p, 0.6, rng).expect("valid probability");
    let gamma = rng.random_range(0.2..3.0);
    let mut effects = EffectBlocks::zeros(p, k, gamma);
    for (from, to) in dag.edges() {
        effects.set(to, from, DMatrix::from_fn(k, k, |_, _| 0.5 * standard_normal(rng)));
    }

    let weights = (0..p * k).map(|_| sample_dirichlet(&vec![1.0; m], rng)).collect();
    let variances = (0..p * k)
        .map(|_| (0..m).map(|_| rng.random_range(0.1..2.0)).collect())
        .collect();
    let assignments = (0..n * p * k).map(|_| rng.random_range(0..m)).collect();
    let noise = MixtureNoise { m, weights, variances, assignments };

    let z = (0..n)
        .map(|_| DMatrix::from_fn(p, k, |_, _| StandardNormal.sample(rng)))
        .collect();
    let sigma = (0..p).map(|_| rng.random_range(0.05..1.0)).collect();

    let mut curves = Vec::with_capacity(n * p);
    for _ in 0..n * p {
        let len = rng.random_range(1..=max_points.max(1));
        let mut grid: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
        grid.sort_by(f64::total_cmp);
        let values = (0..len).map(|_| StandardNormal.sample(rng)).collect();
        curves.push(Curve::new(grid, values).expect("valid curve"));
    }
    let dataset = FunctionalDataset::new(
        super::default_labels(p),
        (0..n).map(|i| format!("s{i}")).collect(),
        curves,
    )
    .expect("consistent dataset");

    let state = ModelState {
        dag,
        effects,
        noise,
        z,
        sigma,
        r: rng.random_range(0.05..0.95),
        basis,
        penalty,
    };
    (dataset, state)
}

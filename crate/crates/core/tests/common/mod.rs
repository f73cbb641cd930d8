//! Gibbs audit: for every conditional sampler, the log conditional density
//! difference between two values of the block must equal the log joint
//! difference with everything else held fixed.

#![allow(dead_code)]

use fling::graph::Dag;
use fling::model::fixtures::{random_instance, InstanceSize};
use fling::model::{log_edge_prior_counts, log_joint_augmented, EdgePrior, FunctionalDataset, Hyperparameters, ModelState};
use fling::sampler::conditionals::{
    assignment_log_weights, basis_conditional, effect_row_conditional, gamma_conditional, lambda_conditional,
    mixture_stats, node_log_marginal, r_conditional, residuals, sigma_conditionals, z_conditional,
};
use fling::sampler::DataCache;
use fling::stats::{beta_ln_pdf, dirichlet_ln_pdf, sample_dirichlet, standard_normal_vector};
use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const AUDIT_TOL: f64 = 1e-8;

pub const SAMPLERS: [&str; 11] = [
    "latent", "assignment", "weights", "variances", "effects", "edges", "edge_probability", "basis", "lambda",
    "sigma", "gamma",
];

pub struct Instance {
    pub data: FunctionalDataset,
    pub state: ModelState,
    pub hp: Hyperparameters,
    pub cache: DataCache,
}

pub fn instance(rng: &mut ChaCha8Rng) -> Instance {
    let size = InstanceSize {
        n: rng.random_range(1..=5),
        p: rng.random_range(2..=4),
        k: rng.random_range(1..=3),
        m: rng.random_range(2..=3),
        n_splines: rng.random_range(5..=9),
        max_points: rng.random_range(1..=6),
    };
    let (data, state) = random_instance(size, rng);
    let hp = Hyperparameters { m: size.m, k: size.k, n_splines: size.n_splines, ..Default::default() };
    let cache = DataCache::new(&data, &state.penalty).unwrap();
    Instance { data, state, hp, cache }
}

fn joint(inst: &Instance, s: &ModelState) -> f64 {
    log_joint_augmented(&inst.data, s, &inst.hp, EdgePrior::SampledR).unwrap()
}

fn positive<R: Rng>(rng: &mut R) -> f64 {
    (rng.random_range(-2.0..2.0f64)).exp()
}

/// `|Δ log conditional − Δ log joint|` for one random pair of values of the
/// named block.
pub fn audit(name: &str, inst: &Instance, rng: &mut ChaCha8Rng) -> f64 {
    let s0 = &inst.state;
    let (n, p, k, m) = (s0.n(), s0.p(), s0.k(), s0.noise.m);
    let mut a = s0.clone();
    let mut b = s0.clone();
    let cond_diff = match name {
        "latent" => {
            let i = rng.random_range(0..n);
            let cond = z_conditional(&inst.cache, s0, &inst.cache.projected_grams(&s0.basis), i).unwrap();
            let (x, y) = (standard_normal_vector(p * k, rng), standard_normal_vector(p * k, rng));
            a.z[i] = DMatrix::from_row_slice(p, k, x.as_slice());
            b.z[i] = DMatrix::from_row_slice(p, k, y.as_slice());
            cond.ln_pdf(&x) - cond.ln_pdf(&y)
        }
        "assignment" => {
            let (i, j, kk) = (rng.random_range(0..n), rng.random_range(0..p), rng.random_range(0..k));
            let eps = residuals(s0).unwrap()[i][(j, kk)];
            let w = assignment_log_weights(s0, j, kk, eps);
            let (c1, c2) = (rng.random_range(0..m), rng.random_range(0..m));
            let idx = s0.ijk(i, j, kk);
            a.noise.assignments[idx] = c1;
            b.noise.assignments[idx] = c2;
            w[c1] - w[c2]
        }
        "weights" => {
            let (j, kk) = (rng.random_range(0..p), rng.random_range(0..k));
            let alpha = mixture_stats(s0, &residuals(s0).unwrap(), j, kk).weight_conditional(&inst.hp);
            let (x, y) = (sample_dirichlet(&vec![1.0; m], rng), sample_dirichlet(&vec![1.0; m], rng));
            let jk = s0.jk(j, kk);
            a.noise.weights[jk] = x.clone();
            b.noise.weights[jk] = y.clone();
            dirichlet_ln_pdf(&x, &alpha) - dirichlet_ln_pdf(&y, &alpha)
        }
        "variances" => {
            let (j, kk, c) = (rng.random_range(0..p), rng.random_range(0..k), rng.random_range(0..m));
            let ig = mixture_stats(s0, &residuals(s0).unwrap(), j, kk).variance_conditional(&inst.hp, c);
            let (x, y) = (positive(rng), positive(rng));
            let jk = s0.jk(j, kk);
            a.noise.variances[jk][c] = x;
            b.noise.variances[jk][c] = y;
            ig.ln_pdf(x) - ig.ln_pdf(y)
        }
        "effects" => {
            let children: Vec<usize> = (0..p).filter(|&j| !s0.dag.parents(j).is_empty()).collect();
            if children.is_empty() {
                return 0.0;
            }
            let j = *children.choose(rng).unwrap();
            let kk = rng.random_range(0..k);
            let cond = effect_row_conditional(s0, j, kk).unwrap().unwrap();
            let parents = s0.dag.parents(j);
            let (x, y) = (standard_normal_vector(parents.len() * k, rng), standard_normal_vector(parents.len() * k, rng));
            for (idx, &l) in parents.iter().enumerate() {
                for c in 0..k {
                    a.effects.get_mut(j, l).unwrap()[(kk, c)] = x[idx * k + c];
                    b.effects.get_mut(j, l).unwrap()[(kk, c)] = y[idx * k + c];
                }
            }
            cond.ln_pdf(&x) - cond.ln_pdf(&y)
        }
        "edges" => return audit_edge_marginal(inst, rng),
        "edge_probability" => {
            let (al, be) = r_conditional(s0, &inst.hp);
            let (x, y) = (rng.random_range(0.01..0.99), rng.random_range(0.01..0.99));
            a.r = x;
            b.r = y;
            beta_ln_pdf(x, al, be) - beta_ln_pdf(y, al, be)
        }
        "basis" => {
            let kk = rng.random_range(0..k);
            let cond = basis_conditional(&inst.cache, s0, kk).unwrap();
            let l = s0.basis.dim();
            let (x, y) = (standard_normal_vector(l, rng), standard_normal_vector(l, rng));
            a.basis.set_coefficient(kk, &x);
            b.basis.set_coefficient(kk, &y);
            cond.ln_pdf(&x) - cond.ln_pdf(&y)
        }
        "lambda" => {
            let kk = rng.random_range(0..k);
            let tg = lambda_conditional(&s0.basis, kk);
            // Capped so the joint's λ·roughness terms stay small enough for an
            // absolute 1e-8 comparison.
            let (lo, hi) = (tg.lo.max(1e-4).ln(), tg.hi.min(1e4).ln());
            let draw = |rng: &mut ChaCha8Rng| (lo + (hi - lo) * rng.random_range(0.05..0.95)).exp();
            let (x, y) = (draw(rng), draw(rng));
            a.basis.lambda[kk] = x;
            b.basis.lambda[kk] = y;
            tg.ln_pdf_unnormalized(x) - tg.ln_pdf_unnormalized(y)
        }
        "sigma" => {
            let j = rng.random_range(0..p);
            let ig = sigma_conditionals(&inst.cache, s0, &inst.hp)[j];
            let (x, y) = (positive(rng), positive(rng));
            a.sigma[j] = x;
            b.sigma[j] = y;
            ig.ln_pdf(x) - ig.ln_pdf(y)
        }
        "gamma" => {
            let ig = gamma_conditional(s0, &inst.hp);
            let (x, y) = (positive(rng), positive(rng));
            a.effects.gamma = x;
            b.effects.gamma = y;
            ig.ln_pdf(x) - ig.ln_pdf(y)
        }
        other => panic!("unknown sampler {other}"),
    };
    (cond_diff - (joint(inst, &a) - joint(inst, &b))).abs()
}

/// Collapsed edge kernel: for two parent sets `S1`, `S2` of a node and
/// arbitrary effect blocks, `log m(S1) − log m(S2)` plus the prior odds must
/// equal `[log joint − log p(B | rest)]` evaluated under each parent set.
fn audit_edge_marginal(inst: &Instance, rng: &mut ChaCha8Rng) -> f64 {
    let s0 = &inst.state;
    let p = s0.p();
    let order = s0.dag.topological_order();
    let pos = rng.random_range(0..p);
    let j = order[pos];
    let earlier: Vec<usize> = order[..pos].to_vec();
    let mut side = |s: &mut ModelState| -> (f64, Vec<usize>) {
        let parents: Vec<usize> = earlier.iter().copied().filter(|_| rng.random::<bool>()).collect();
        let mut edges: Vec<(usize, usize)> = s.dag.edges().into_iter().filter(|&(_, to)| to != j).collect();
        edges.extend(parents.iter().map(|&l| (l, j)));
        s.dag = Dag::from_edges(p, &edges).unwrap();
        let k = s.k();
        for l in 0..p {
            s.effects.clear(j, l);
        }
        for &l in &parents {
            s.effects.set(j, l, DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0)));
        }
        let mut cond = 0.0;
        let mut sorted = parents.clone();
        sorted.sort_unstable();
        for kk in 0..k {
            if let Some(c) = effect_row_conditional(s, j, kk).unwrap() {
                let beta = DVector::from_fn(sorted.len() * k, |idx, _| s.effects.get(j, sorted[idx / k]).unwrap()[(kk, idx % k)]);
                cond += c.ln_pdf(&beta);
            }
        }
        (cond, sorted)
    };
    let mut a = s0.clone();
    let mut b = s0.clone();
    let (cond_a, pa) = side(&mut a);
    let (cond_b, pb) = side(&mut b);
    let hp = &inst.hp;
    let lhs = node_log_marginal(&a, j, &pa).unwrap() - node_log_marginal(&b, j, &pb).unwrap()
        + log_edge_prior_counts(a.dag.edge_count(), p, a.r, hp, EdgePrior::SampledR)
        - log_edge_prior_counts(b.dag.edge_count(), p, b.r, hp, EdgePrior::SampledR);
    let rhs = (joint(inst, &a) - cond_a) - (joint(inst, &b) - cond_b);
    (lhs - rhs).abs()
}

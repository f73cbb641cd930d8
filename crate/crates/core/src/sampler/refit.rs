//! Graph moves that refit the affected nodes.
//!
//! The single-edge kernel in `edges` conditions on the mixture assignments
//! and variances, which adapt to whichever graph the chain currently holds;
//! reversing an established edge then almost never pays off. This kernel
//! targets the same posterior with the assignments summed out. Together with
//! the graph move it redraws the effect rows, mixture weights and mixture
//! variances of every node whose parent set changes, from a proposal fitted
//! to the data under the new parent set, and it corrects with the exact
//! proposal densities. The assignments of an accepted node are then drawn
//! from their conditional.
//!
//! Mixture components are exchangeable a posteriori, so the proposal is
//! symmetrized over component labels. Its density sums over all `M!`
//! relabelings, which caps the kernel at [`MAX_REFIT_COMPONENTS`].

use std::collections::HashMap;
use std::rc::Rc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use statrs::function::gamma::ln_gamma;

use super::conditionals::{assignment_log_weights, edge_prior_log_odds, parent_design};
use super::config::McmcConfig;
use super::edges::{propose, EdgeMoveStats, Proposal};
use crate::error::{Error, Result};
use crate::graph::{Dag, EdgeMove};
use crate::model::{EdgePrior, Hyperparameters, ModelState};
use crate::stats::{
    dirichlet_ln_pdf, log_sum_exp, normal_ln_pdf, sample_dirichlet, sample_log_categorical, standard_normal,
    GaussianPrecision, InverseGamma, LN_2PI,
};

/// Largest mixture size for which the kernel runs.
pub const MAX_REFIT_COMPONENTS: usize = 6;

const EM_ITERATIONS: usize = 20;

/// Parameters of one coefficient row `k` of one node.
#[derive(Clone, Debug, PartialEq)]
pub struct RowParams {
    /// Row `k` of `[B_{j l_1}, B_{j l_2}, …]` over the parents in increasing
    /// order; empty for a root.
    pub beta: DVector<f64>,
    pub weights: Vec<f64>,
    pub variances: Vec<f64>,
}

pub fn current_params(state: &ModelState, j: usize) -> Vec<RowParams> {
    let k = state.k();
    let parents = state.dag.parents(j);
    (0..k)
        .map(|row| {
            let mut beta = DVector::zeros(parents.len() * k);
            for (idx, &l) in parents.iter().enumerate() {
                let block = state.effects.get(j, l).expect("block on every edge");
                for c in 0..k {
                    beta[idx * k + c] = block[(row, c)];
                }
            }
            let jk = state.jk(j, row);
            RowParams {
                beta,
                weights: state.noise.weights[jk].clone(),
                variances: state.noise.variances[jk].clone(),
            }
        })
        .collect()
}

/// Collapsed log density of node `j`'s coefficients given its parents, plus
/// the priors of its effect rows, mixture weights and mixture variances.
pub fn node_log_target(state: &ModelState, hp: &Hyperparameters, j: usize, parents: &[usize], params: &[RowParams]) -> f64 {
    let x = parent_design(state, parents);
    let alpha = vec![hp.alpha; state.noise.m];
    let tau_prior = InverseGamma::new(hp.a_tau, hp.b_tau);
    let gamma = state.effects.gamma;
    let mut total = 0.0;
    let mut terms = vec![0.0; state.noise.m];
    for (k, row) in params.iter().enumerate() {
        if row.weights.iter().any(|&w| !(w > 0.0)) || row.variances.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return f64::NEG_INFINITY;
        }
        let fitted = &x * &row.beta;
        for i in 0..state.n() {
            let eps = state.z[i][(j, k)] - if parents.is_empty() { 0.0 } else { fitted[i] };
            for (m, term) in terms.iter_mut().enumerate() {
                *term = row.weights[m].ln() + normal_ln_pdf(eps, row.variances[m]);
            }
            total += log_sum_exp(&terms);
        }
        total += row.beta.iter().map(|b| normal_ln_pdf(*b, gamma)).sum::<f64>();
        total += dirichlet_ln_pdf(&row.weights, &alpha);
        total += row.variances.iter().map(|&t| tau_prior.ln_pdf(t)).sum::<f64>();
    }
    total
}

/// Scale-mixture fit of zero-mean residuals by EM at the conditional modes.
struct MixtureFit {
    counts: Vec<f64>,
    variances: Vec<f64>,
    /// `E[1/τ]` per observation under the final responsibilities.
    precision: Vec<f64>,
}

fn fit_mixture(r: &[f64], m: usize, hp: &Hyperparameters) -> MixtureFit {
    let n = r.len();
    // Start from equal-size groups of the sorted squared residuals.
    let mut sq: Vec<f64> = r.iter().map(|v| v * v).collect();
    sq.sort_by(f64::total_cmp);
    let mut variances: Vec<f64> = (0..m)
        .map(|c| {
            let group = &sq[c * n / m..(c + 1) * n / m];
            (2.0 * hp.b_tau + group.iter().sum::<f64>()) / (2.0 * hp.a_tau + group.len() as f64)
        })
        .collect();
    let mut weights = vec![1.0 / m as f64; m];
    let mut counts = vec![0.0; m];
    let mut resp = vec![0.0; n * m];
    let (mut offset, mut half_precision) = (vec![0.0; m], vec![0.0; m]);
    for _ in 0..EM_ITERATIONS {
        for c in 0..m {
            offset[c] = weights[c].ln() - 0.5 * (LN_2PI + variances[c].ln());
            half_precision[c] = 0.5 / variances[c];
        }
        counts.iter_mut().for_each(|c| *c = 0.0);
        let mut sums = vec![0.0; m];
        for (i, &e) in r.iter().enumerate() {
            let row = &mut resp[i * m..(i + 1) * m];
            let e2 = e * e;
            let mut top = f64::NEG_INFINITY;
            for c in 0..m {
                row[c] = offset[c] - half_precision[c] * e2;
                top = top.max(row[c]);
            }
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - top).exp();
                total += *v;
            }
            for c in 0..m {
                row[c] /= total;
                counts[c] += row[c];
                sums[c] += row[c] * e2;
            }
        }
        for c in 0..m {
            variances[c] = ((hp.b_tau + 0.5 * sums[c]) / (hp.a_tau + 1.0 + 0.5 * counts[c])).max(f64::MIN_POSITIVE);
            weights[c] = (counts[c] + hp.alpha) / (n as f64 + m as f64 * hp.alpha);
        }
    }
    let precision = (0..n)
        .map(|i| (0..m).map(|c| resp[i * m + c] / variances[c]).sum())
        .collect();
    MixtureFit { counts, variances, precision }
}

/// Proposal for one row: Gaussian effects, log-normal variances and
/// Dirichlet weights, then a uniformly random relabeling of the components.
struct RowProposal {
    beta: Option<GaussianPrecision>,
    log_tau_mean: Vec<f64>,
    log_tau_var: Vec<f64>,
    dirichlet: Vec<f64>,
}

fn weighted_system(x: &DMatrix<f64>, y: &DVector<f64>, w: &[f64], gamma: f64) -> (DMatrix<f64>, DVector<f64>) {
    let mut xw = x.clone();
    for (i, wi) in w.iter().enumerate() {
        xw.row_mut(i).scale_mut(*wi);
    }
    let mut prec = x.tr_mul(&xw);
    for d in 0..prec.nrows() {
        prec[(d, d)] += 1.0 / gamma;
    }
    (prec, xw.tr_mul(y))
}

impl RowProposal {
    fn fit(x: &DMatrix<f64>, y: &DVector<f64>, m: usize, hp: &Hyperparameters, gamma: f64) -> Result<Self> {
        let n = y.len();
        let residuals = |beta: &DVector<f64>| -> Vec<f64> { (y - x * beta).iter().copied().collect() };
        let (fit, beta) = if x.ncols() == 0 {
            (fit_mixture(y.as_slice(), m, hp), None)
        } else {
            let (prec, lin) = weighted_system(x, y, &vec![1.0; n], gamma);
            let first = GaussianPrecision::from_canonical(prec, &lin)?;
            let fit = fit_mixture(&residuals(&first.mean), m, hp);
            let (prec, lin) = weighted_system(x, y, &fit.precision, gamma);
            let beta = GaussianPrecision::from_canonical(prec, &lin)?;
            (fit_mixture(&residuals(&beta.mean), m, hp), Some(beta))
        };
        // Twice the approximate conditional variance of log τ.
        let log_tau_var = fit.counts.iter().map(|c| 2.0 / (hp.a_tau + 0.5 * c)).collect();
        Ok(Self {
            beta,
            log_tau_mean: fit.variances.iter().map(|t| t.ln()).collect(),
            log_tau_var,
            dirichlet: fit.counts.iter().map(|c| hp.alpha + c).collect(),
        })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> RowParams {
        let m = self.dirichlet.len();
        let beta = self.beta.as_ref().map_or_else(|| DVector::zeros(0), |g| g.sample(rng));
        let raw = sample_dirichlet(&self.dirichlet, rng);
        let mut labels: Vec<usize> = (0..m).collect();
        labels.shuffle(rng);
        let mut weights = vec![0.0; m];
        let mut variances = vec![0.0; m];
        for (c, &s) in labels.iter().enumerate() {
            weights[c] = raw[s];
            variances[c] = (self.log_tau_mean[s] + self.log_tau_var[s].sqrt() * standard_normal(rng)).exp();
        }
        RowParams { beta, weights, variances }
    }

    fn ln_pdf(&self, row: &RowParams, perms: &[Vec<usize>]) -> f64 {
        let m = self.dirichlet.len();
        if row.weights.iter().any(|&w| !(w > 0.0)) || row.variances.iter().any(|&t| !(t > 0.0)) {
            return f64::NEG_INFINITY;
        }
        // a[c][s]: component c drawn from proposal slot s.
        let a: Vec<Vec<f64>> = (0..m)
            .map(|c| {
                let lt = row.variances[c].ln();
                (0..m)
                    .map(|s| {
                        normal_ln_pdf(lt - self.log_tau_mean[s], self.log_tau_var[s]) - lt
                            + (self.dirichlet[s] - 1.0) * row.weights[c].ln()
                            - ln_gamma(self.dirichlet[s])
                    })
                    .collect()
            })
            .collect();
        let terms: Vec<f64> = perms.iter().map(|p| p.iter().enumerate().map(|(c, &s)| a[c][s]).sum()).collect();
        let mixture = ln_gamma(self.dirichlet.iter().sum()) + log_sum_exp(&terms) - (perms.len() as f64).ln();
        let beta = self.beta.as_ref().map_or(0.0, |g| g.ln_pdf(&row.beta));
        mixture + beta
    }
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(m - 1) {
        for pos in 0..m {
            let mut p = rest.clone();
            p.insert(pos, m - 1);
            out.push(p);
        }
    }
    out
}

/// Proposal for all rows of one node under a given parent set.
pub struct NodeProposal {
    rows: Vec<RowProposal>,
}

impl NodeProposal {
    pub fn fit(state: &ModelState, hp: &Hyperparameters, j: usize, parents: &[usize]) -> Result<Self> {
        let x = parent_design(state, parents);
        let rows = (0..state.k())
            .map(|k| {
                let y = DVector::from_iterator(state.n(), state.z.iter().map(|z| z[(j, k)]));
                RowProposal::fit(&x, &y, state.noise.m, hp, state.effects.gamma)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<RowParams> {
        self.rows.iter().map(|r| r.sample(rng)).collect()
    }

    /// `perms` lists every relabeling of the mixture components.
    fn ln_pdf(&self, params: &[RowParams], perms: &[Vec<usize>]) -> f64 {
        self.rows.iter().zip(params).map(|(r, p)| r.ln_pdf(p, perms)).sum()
    }
}

/// Writes node `j`'s parameters for the parent set `parents` into `state`
/// (whose graph must already hold that parent set).
pub fn install(state: &mut ModelState, j: usize, parents: &[usize], params: &[RowParams]) {
    let k = state.k();
    for l in 0..state.p() {
        state.effects.clear(j, l);
    }
    for (idx, &l) in parents.iter().enumerate() {
        let block = DMatrix::from_fn(k, k, |row, c| params[row].beta[idx * k + c]);
        state.effects.set(j, l, block);
    }
    for (row, pr) in params.iter().enumerate() {
        let jk = state.jk(j, row);
        state.noise.weights[jk] = pr.weights.clone();
        state.noise.variances[jk] = pr.variances.clone();
    }
}

fn redraw_assignments<R: Rng + ?Sized>(state: &mut ModelState, j: usize, rng: &mut R) {
    let parents = state.dag.parents(j);
    for i in 0..state.n() {
        for k in 0..state.k() {
            let mut eps = state.z[i][(j, k)];
            for &l in &parents {
                let b = state.effects.get(j, l).expect("block on every edge");
                eps -= (b.row(k) * state.z[i].row(l).transpose())[(0, 0)];
            }
            let c = sample_log_categorical(&assignment_log_weights(state, j, k, eps), rng);
            let idx = state.ijk(i, j, k);
            state.noise.assignments[idx] = c;
        }
    }
}

/// A scored proposal, split so the parts can be audited separately.
pub struct RefitMove {
    pub next: Dag,
    /// Nodes whose parent set changes, with their proposed parameters.
    pub nodes: Vec<(usize, Vec<RowParams>)>,
    /// Change in the log posterior (assignments summed out).
    pub log_target_ratio: f64,
    /// `log q(reverse) − log q(forward)` over graph and parameters.
    pub log_proposal_ratio: f64,
}

impl RefitMove {
    pub fn log_alpha(&self) -> f64 {
        self.log_target_ratio + self.log_proposal_ratio
    }
}

/// Proposal scoring for one pass of the kernel. Fits depend only on `Z`,
/// `γ` and the parent set, none of which change during the pass, so they are
/// cached; the current-parameter terms of a node are cached until it moves.
pub(crate) struct Scorer<'a> {
    hp: &'a Hyperparameters,
    mode: EdgePrior,
    perms: Vec<Vec<usize>>,
    fits: HashMap<(usize, Vec<usize>), Rc<NodeProposal>>,
    /// `(node_log_target, log q)` of each node's current parameters.
    current: Vec<Option<(f64, f64)>>,
}

impl<'a> Scorer<'a> {
    pub(crate) fn new(state: &ModelState, hp: &'a Hyperparameters, mode: EdgePrior) -> Self {
        Self {
            hp,
            mode,
            perms: permutations(state.noise.m),
            fits: HashMap::new(),
            current: vec![None; state.p()],
        }
    }

    fn fit(&mut self, state: &ModelState, v: usize, parents: Vec<usize>) -> Result<Rc<NodeProposal>> {
        if let Some(f) = self.fits.get(&(v, parents.clone())) {
            return Ok(f.clone());
        }
        let f = Rc::new(NodeProposal::fit(state, self.hp, v, &parents)?);
        self.fits.insert((v, parents), f.clone());
        Ok(f)
    }

    fn current(&mut self, state: &ModelState, v: usize) -> Result<(f64, f64)> {
        if let Some(c) = self.current[v] {
            return Ok(c);
        }
        let parents = state.dag.parents(v);
        let params = current_params(state, v);
        let fit = self.fit(state, v, parents.clone())?;
        let c = (node_log_target(state, self.hp, v, &parents, &params), fit.ln_pdf(&params, &self.perms));
        self.current[v] = Some(c);
        Ok(c)
    }

    fn invalidate(&mut self, v: usize) {
        self.current[v] = None;
    }

    /// Scores a graph proposal, drawing the refitted parameters; `None` when
    /// the proposal would create a cycle.
    pub(crate) fn score<R: Rng + ?Sized>(&mut self, state: &ModelState, prop: &Proposal, rng: &mut R) -> Result<Option<RefitMove>> {
        let next = match state.dag.edge_delta(prop.to, prop.from, prop.op) {
            Ok(d) => d,
            Err(Error::CycleViolation) => return Ok(None),
            Err(e) => return Err(e),
        };
        let affected: &[usize] = match prop.op {
            EdgeMove::Reverse => &[prop.to, prop.from],
            _ => &[prop.to],
        };
        let mut log_target_ratio =
            edge_prior_log_odds(state, self.hp, self.mode, next.edge_count(), state.dag.edge_count());
        let mut log_proposal_ratio = prop.log_q_ratio;
        let mut nodes = Vec::with_capacity(affected.len());
        for &v in affected {
            let new_parents = next.parents(v);
            let (old_target, old_q) = self.current(state, v)?;
            let forward = self.fit(state, v, new_parents.clone())?;
            let fresh = forward.sample(rng);
            log_target_ratio += node_log_target(state, self.hp, v, &new_parents, &fresh) - old_target;
            log_proposal_ratio += old_q - forward.ln_pdf(&fresh, &self.perms);
            nodes.push((v, fresh));
        }
        Ok(Some(RefitMove { next, nodes, log_target_ratio, log_proposal_ratio }))
    }
}

/// Runs `config.refit_proposals` (default `p`) refitting graph proposals.
pub fn update_edges_refit<R: Rng + ?Sized>(
    state: &mut ModelState,
    hp: &Hyperparameters,
    config: &McmcConfig,
    rng: &mut R,
) -> Result<EdgeMoveStats> {
    let p = state.p();
    let mut stats = EdgeMoveStats::default();
    let proposals = config.refit_proposals.unwrap_or(p);
    if p < 2 || proposals == 0 || state.noise.m > MAX_REFIT_COMPONENTS {
        return Ok(stats);
    }
    let mut scorer = Scorer::new(state, hp, config.edge_prior);
    for _ in 0..proposals {
        let Some(prop) = propose(&state.dag, config, rng) else {
            continue;
        };
        stats.proposed += 1;
        let Some(mv) = scorer.score(state, &prop, rng)? else {
            stats.cyclic += 1;
            continue;
        };
        if rng.random::<f64>().ln() < mv.log_alpha() {
            state.dag = mv.next;
            for (v, params) in &mv.nodes {
                let parents = state.dag.parents(*v);
                install(state, *v, &parents, params);
                redraw_assignments(state, *v, rng);
                scorer.invalidate(*v);
            }
            stats.accepted += 1;
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{random_instance, InstanceSize};
    use crate::model::log_joint;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn permutations_are_complete_and_distinct() {
        let perms = permutations(4);
        assert_eq!(perms.len(), 24);
        let mut sorted = perms.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 24);
        assert!(perms.iter().all(|p| {
            let mut q = p.clone();
            q.sort();
            q == vec![0, 1, 2, 3]
        }));
    }

    #[test]
    fn round_trip_through_install() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let size = InstanceSize { n: 4, p: 3, k: 2, m: 3, n_splines: 6, max_points: 3 };
        let (_, s) = random_instance(size, &mut rng);
        for j in 0..3 {
            let params = current_params(&s, j);
            let mut t = s.clone();
            install(&mut t, j, &s.dag.parents(j), &params);
            assert_eq!(t.effects, s.effects);
            assert_eq!(t.noise, s.noise);
        }
    }

    #[test]
    fn target_ratio_matches_the_joint_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let config = McmcConfig::default();
        let mut checked = 0;
        for _ in 0..60 {
            let size = InstanceSize { n: rng.random_range(1..6), p: rng.random_range(2..5), k: rng.random_range(1..3), m: rng.random_range(2..4), n_splines: 6, max_points: 3 };
            let (data, s) = random_instance(size, &mut rng);
            let hp = Hyperparameters { m: size.m, k: size.k, n_splines: 6, ..Default::default() };
            let Some(prop) = propose(&s.dag, &config, &mut rng) else { continue };
            for mode in [EdgePrior::SampledR, EdgePrior::Marginal] {
                let Some(mv) = Scorer::new(&s, &hp, mode).score(&s, &prop, &mut rng).unwrap() else { continue };
                let mut t = s.clone();
                t.dag = mv.next.clone();
                for (v, params) in &mv.nodes {
                    let parents = t.dag.parents(*v);
                    install(&mut t, *v, &parents, params);
                }
                t.validate().unwrap();
                let expected = log_joint(&data, &t, &hp, mode).unwrap() - log_joint(&data, &s, &hp, mode).unwrap();
                assert!((mv.log_target_ratio - expected).abs() < 1e-8, "{} vs {expected}", mv.log_target_ratio);
                checked += 1;
            }
        }
        assert!(checked > 60);
    }

    #[test]
    fn symmetrized_density_matches_two_component_enumeration() {
        let prop = RowProposal {
            beta: None,
            log_tau_mean: vec![-1.0, 0.5],
            log_tau_var: vec![0.2, 0.3],
            dirichlet: vec![3.0, 5.0],
        };
        let row = RowParams { beta: DVector::zeros(0), weights: vec![0.3, 0.7], variances: vec![0.9, 0.4] };
        let ln_ln = |t: f64, s: usize| normal_ln_pdf(t.ln() - prop.log_tau_mean[s], prop.log_tau_var[s]) - t.ln();
        let dir = |w: &[f64]| dirichlet_ln_pdf(w, &prop.dirichlet);
        let identity = ln_ln(0.9, 0) + ln_ln(0.4, 1) + dir(&[0.3, 0.7]);
        let swapped = ln_ln(0.9, 1) + ln_ln(0.4, 0) + dir(&[0.7, 0.3]);
        let expected = log_sum_exp(&[identity, swapped]) - 2f64.ln();
        assert!((prop.ln_pdf(&row, &permutations(2)) - expected).abs() < 1e-12);
    }

    #[test]
    fn proposal_concentrates_on_a_clean_regression() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 400;
        let x = DMatrix::from_fn(n, 1, |_, _| standard_normal(&mut rng));
        let y = DVector::from_fn(n, |i, _| {
            let sd = if i % 2 == 0 { 0.3 } else { 1.2 };
            0.8 * x[(i, 0)] + sd * standard_normal(&mut rng)
        });
        let hp = Hyperparameters { m: 2, ..Default::default() };
        let prop = RowProposal::fit(&x, &y, 2, &hp, 1.0).unwrap();
        assert!((prop.beta.as_ref().unwrap().mean[0] - 0.8).abs() < 0.05);
        let mut tau: Vec<f64> = prop.log_tau_mean.iter().map(|v| v.exp()).collect();
        tau.sort_by(f64::total_cmp);
        // The IG(1, 1) prior pulls the narrow component up at this n, so only
        // the separation of the two scales is checked.
        assert!(tau[0] < 0.25 && tau[1] > 1.0, "{tau:?}");
    }
}

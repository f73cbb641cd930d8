//! Posterior summaries accumulated over the retained draws.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::model::ModelState;

/// Posterior mean with an equal-tailed 95% credible interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn from_draws(draws: &[f64]) -> Self {
        if draws.is_empty() {
            return Self { mean: f64::NAN, lower: f64::NAN, upper: f64::NAN };
        }
        let mut sorted = draws.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            mean: draws.iter().sum::<f64>() / draws.len() as f64,
            lower: quantile(&sorted, 0.025),
            upper: quantile(&sorted, 0.975),
        }
    }
}

/// Linearly interpolated quantile of sorted values.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mixture parameters per `(j, k)` (index `j * K + k`) and component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureSummary {
    pub weights: Vec<Vec<Interval>>,
    pub variances: Vec<Vec<Interval>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub p: usize,
    pub k: usize,
    pub draws: usize,
    /// `edge_ppi[j][l]`: posterior probability of `l -> j`.
    pub edge_ppi: Vec<Vec<f64>>,
    /// Mean of `B_jl` over the draws containing `l -> j` (index `j * p + l`).
    pub effect_mean: Vec<Option<DMatrix<f64>>>,
    /// Retained basis coefficient matrices (`K × L`).
    pub basis_draws: Vec<DMatrix<f64>>,
    /// Retained graphs.
    pub graph_draws: Vec<Dag>,
    pub lambda: Vec<Interval>,
    pub sigma: Vec<Interval>,
    pub gamma: Interval,
    pub r: Interval,
    pub mixture: MixtureSummary,
    /// Log joint density (assignments summed out) at each retained draw.
    pub log_joint_trace: Vec<f64>,
    /// Acceptance rate of the single-edge kernel.
    pub edge_acceptance_rate: f64,
    /// Acceptance rate of the refitting graph kernel.
    #[serde(default)]
    pub refit_acceptance_rate: f64,
}

impl PosteriorSummary {
    /// Checks the documented invariants.
    pub fn validate(&self) -> Result<()> {
        for (j, row) in self.edge_ppi.iter().enumerate() {
            if row[j] != 0.0 || row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidState(format!("invalid inclusion probabilities in row {j}")));
            }
        }
        if self.log_joint_trace.len() != self.draws || self.graph_draws.len() != self.draws {
            return Err(Error::InvalidState("trace length differs from the draw count".into()));
        }
        Ok(())
    }
}

/// Accumulates retained states.
#[derive(Clone, Debug)]
pub(crate) struct SummaryBuilder {
    p: usize,
    k: usize,
    edge_counts: Vec<usize>,
    effect_sums: Vec<Option<DMatrix<f64>>>,
    basis: Vec<DMatrix<f64>>,
    graphs: Vec<Dag>,
    lambda: Vec<Vec<f64>>,
    sigma: Vec<Vec<f64>>,
    gamma: Vec<f64>,
    r: Vec<f64>,
    weights: Vec<Vec<Vec<f64>>>,
    variances: Vec<Vec<Vec<f64>>>,
    trace: Vec<f64>,
}

impl SummaryBuilder {
    pub fn new(p: usize, k: usize, m: usize) -> Self {
        Self {
            p,
            k,
            edge_counts: vec![0; p * p],
            effect_sums: vec![None; p * p],
            basis: Vec::new(),
            graphs: Vec::new(),
            lambda: vec![Vec::new(); k],
            sigma: vec![Vec::new(); p],
            gamma: Vec::new(),
            r: Vec::new(),
            weights: vec![vec![Vec::new(); m]; p * k],
            variances: vec![vec![Vec::new(); m]; p * k],
            trace: Vec::new(),
        }
    }

    pub fn push(&mut self, state: &ModelState, log_joint: f64) {
        let p = self.p;
        for (from, to) in state.dag.edges() {
            let idx = to * p + from;
            self.edge_counts[idx] += 1;
            let b = state.effects.get(to, from).expect("block on every edge");
            match &mut self.effect_sums[idx] {
                Some(sum) => *sum += b,
                slot => *slot = Some(b.clone()),
            }
        }
        self.basis.push(state.basis.coefficients.clone());
        self.graphs.push(state.dag.clone());
        for (acc, v) in self.lambda.iter_mut().zip(&state.basis.lambda) {
            acc.push(*v);
        }
        for (acc, v) in self.sigma.iter_mut().zip(&state.sigma) {
            acc.push(*v);
        }
        self.gamma.push(state.effects.gamma);
        self.r.push(state.r);
        for jk in 0..p * self.k {
            for (c, (w, t)) in state.noise.weights[jk].iter().zip(&state.noise.variances[jk]).enumerate() {
                self.weights[jk][c].push(*w);
                self.variances[jk][c].push(*t);
            }
        }
        self.trace.push(log_joint);
    }

    pub fn finish(self, acceptance: f64, refit_acceptance: f64) -> PosteriorSummary {
        let p = self.p;
        let draws = self.trace.len();
        let edge_ppi = (0..p)
            .map(|j| {
                (0..p)
                    .map(|l| if draws == 0 { 0.0 } else { self.edge_counts[j * p + l] as f64 / draws as f64 })
                    .collect()
            })
            .collect();
        let effect_mean = self
            .effect_sums
            .into_iter()
            .zip(&self.edge_counts)
            .map(|(sum, &c)| sum.map(|s| s / c as f64))
            .collect();
        let intervals = |v: &Vec<Vec<f64>>| v.iter().map(|d| Interval::from_draws(d)).collect::<Vec<_>>();
        PosteriorSummary {
            p,
            k: self.k,
            draws,
            edge_ppi,
            effect_mean,
            basis_draws: self.basis,
            graph_draws: self.graphs,
            lambda: intervals(&self.lambda),
            sigma: intervals(&self.sigma),
            gamma: Interval::from_draws(&self.gamma),
            r: Interval::from_draws(&self.r),
            mixture: MixtureSummary {
                weights: self.weights.iter().map(&intervals).collect(),
                variances: self.variances.iter().map(&intervals).collect(),
            },
            log_joint_trace: self.trace,
            edge_acceptance_rate: acceptance,
            refit_acceptance_rate: refit_acceptance,
        }
    }
}

/// Edges with inclusion probability at least `threshold`. Cycles, possible
/// only through marginal thresholding, are broken by dropping the
/// lowest-probability edge on each remaining cycle.
pub fn median_probability_model(edge_ppi: &[Vec<f64>], threshold: f64) -> Dag {
    let p = edge_ppi.len();
    let mut adj = vec![false; p * p];
    for j in 0..p {
        for l in 0..p {
            adj[j * p + l] = j != l && edge_ppi[j][l] >= threshold;
        }
    }
    let (dag, removed) = Dag::repair_cycles(p, adj, |from, to| edge_ppi[to][from]);
    for (from, to) in removed {
        log::warn!(
            "dropped edge {from} -> {to} (ppi {:.3}) to break a cycle in the thresholded graph",
            edge_ppi[to][from]
        );
    }
    dag
}

/// Elementwise mean of several inclusion-probability matrices.
pub fn average_ppi(summaries: &[PosteriorSummary]) -> Result<Vec<Vec<f64>>> {
    let first = summaries
        .first()
        .ok_or_else(|| Error::InvalidConfiguration("no summaries to average".into()))?;
    let p = first.p;
    if summaries.iter().any(|s| s.p != p) {
        return Err(Error::DimensionMismatch("summaries have different node counts".into()));
    }
    let c = summaries.len() as f64;
    Ok((0..p)
        .map(|j| (0..p).map(|l| summaries.iter().map(|s| s.edge_ppi[j][l]).sum::<f64>() / c).collect())
        .collect())
}

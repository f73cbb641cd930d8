//! Metropolis–Hastings over single-edge moves with the effect blocks of the
//! affected nodes integrated out.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::McmcConfig;
use super::conditionals::{edge_prior_log_odds, node_log_marginal};
use super::kernels::draw_child_effects;
use crate::error::{Error, Result};
use crate::graph::{Dag, EdgeMove};
use crate::model::{Hyperparameters, ModelState};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeMoveStats {
    pub proposed: u64,
    pub accepted: u64,
    /// Proposals rejected because they would have closed a cycle.
    pub cyclic: u64,
}

impl EdgeMoveStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn merge(&mut self, other: EdgeMoveStats) {
        self.proposed += other.proposed;
        self.accepted += other.accepted;
        self.cyclic += other.cyclic;
    }
}

/// Ordered pairs `(from, to)` with no edge in either direction.
fn addable_pairs(dag: &Dag) -> Vec<(usize, usize)> {
    let p = dag.p();
    let mut out = Vec::new();
    for from in 0..p {
        for to in 0..p {
            if from != to && !dag.has_edge(from, to) && !dag.has_edge(to, from) {
                out.push((from, to));
            }
        }
    }
    out
}

/// A proposed move together with `log q(back) − log q(forward)`.
pub(crate) struct Proposal {
    pub op: EdgeMove,
    pub from: usize,
    pub to: usize,
    /// `log q(reverse move) − log q(this move)`.
    pub log_q_ratio: f64,
}

pub(crate) fn propose<R: Rng + ?Sized>(dag: &Dag, config: &McmcConfig, rng: &mut R) -> Option<Proposal> {
    let w = config.move_weights;
    let u = rng.random::<f64>() * (w.add + w.remove + w.reverse);
    let op = if u < w.add {
        EdgeMove::Add
    } else if u < w.add + w.remove {
        EdgeMove::Remove
    } else {
        EdgeMove::Reverse
    };
    let edges = dag.edges();
    let s = edges.len() as f64;
    match op {
        EdgeMove::Add => {
            let cands = addable_pairs(dag);
            if cands.is_empty() {
                return None;
            }
            let (from, to) = cands[rng.random_range(0..cands.len())];
            let log_q_ratio = (w.remove / (s + 1.0)).ln() - (w.add / cands.len() as f64).ln();
            Some(Proposal { op, from, to, log_q_ratio })
        }
        EdgeMove::Remove | EdgeMove::Reverse => {
            if edges.is_empty() {
                return None;
            }
            let (from, to) = edges[rng.random_range(0..edges.len())];
            let log_q_ratio = if op == EdgeMove::Remove {
                // removal frees one unordered pair, i.e. two ordered add candidates
                let addable_after = addable_pairs(dag).len() as f64 + 2.0;
                (w.add / addable_after).ln() - (w.remove / s).ln()
            } else {
                0.0
            };
            Some(Proposal { op, from, to, log_q_ratio })
        }
    }
}

/// Runs `config.edge_proposals` (default `p(p-1)/2`) single-edge proposals.
/// Accepted moves redraw the effect blocks of the affected children.
pub fn update_edges<R: Rng + ?Sized>(
    state: &mut ModelState,
    hp: &Hyperparameters,
    config: &McmcConfig,
    rng: &mut R,
) -> Result<EdgeMoveStats> {
    let p = state.p();
    let mut stats = EdgeMoveStats::default();
    if p < 2 {
        return Ok(stats);
    }
    let proposals = config.edge_proposals.unwrap_or(p * (p - 1) / 2).max(1);
    let mut marginal = (0..p)
        .map(|j| node_log_marginal(state, j, &state.dag.parents(j)))
        .collect::<Result<Vec<f64>>>()?;

    for _ in 0..proposals {
        let Some(prop) = propose(&state.dag, config, rng) else {
            continue;
        };
        stats.proposed += 1;
        let next = match state.dag.edge_delta(prop.to, prop.from, prop.op) {
            Ok(d) => d,
            Err(Error::CycleViolation) => {
                stats.cyclic += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let affected: &[usize] = match prop.op {
            EdgeMove::Reverse => &[prop.to, prop.from],
            _ => &[prop.to],
        };
        let mut log_alpha = prop.log_q_ratio
            + edge_prior_log_odds(state, hp, config.edge_prior, next.edge_count(), state.dag.edge_count());
        let mut proposed = Vec::with_capacity(affected.len());
        for &v in affected {
            let m = node_log_marginal(state, v, &next.parents(v))?;
            log_alpha += m - marginal[v];
            proposed.push(m);
        }
        if rng.random::<f64>().ln() < log_alpha {
            state.dag = next;
            for (&v, m) in affected.iter().zip(proposed) {
                marginal[v] = m;
                draw_child_effects(state, v, rng)?;
            }
            stats.accepted += 1;
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::is_acyclic;
    use crate::model::fixtures::{random_instance, InstanceSize};
    use crate::model::EdgePrior;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::function::beta::ln_beta;
    use std::collections::HashMap;

    /// All 3-node DAGs with their marginal prior weights `B(s + 1, 7 − s)`.
    fn three_node_prior() -> HashMap<Dag, f64> {
        let pairs = [(0, 1), (0, 2), (1, 2)];
        let mut out = HashMap::new();
        for code in 0..27 {
            let mut edges = Vec::new();
            let mut c = code;
            for &(a, b) in &pairs {
                match c % 3 {
                    1 => edges.push((a, b)),
                    2 => edges.push((b, a)),
                    _ => {}
                }
                c /= 3;
            }
            if let Ok(d) = Dag::from_edges(3, &edges) {
                let s = edges.len() as f64;
                out.insert(d, ln_beta(s + 1.0, 6.0 - s + 1.0).exp());
            }
        }
        let total: f64 = out.values().sum();
        out.values_mut().for_each(|v| *v /= total);
        out
    }

    #[test]
    fn there_are_25_three_node_dags() {
        assert_eq!(three_node_prior().len(), 25);
    }

    #[test]
    fn prior_is_recovered_without_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let size = InstanceSize { n: 0, p: 3, k: 1, m: 2, n_splines: 6, max_points: 1 };
        let (_, mut s) = random_instance(size, &mut rng);
        let hp = Hyperparameters::default();
        for mode in [EdgePrior::Marginal, EdgePrior::SampledR] {
            let config = McmcConfig { edge_prior: mode, ..Default::default() };
            let mut counts: HashMap<Dag, f64> = HashMap::new();
            let sweeps = 20_000;
            for _ in 0..sweeps {
                update_edges(&mut s, &hp, &config, &mut rng).unwrap();
                if mode == EdgePrior::SampledR {
                    let (a, b) = crate::sampler::conditionals::r_conditional(&s, &hp);
                    s.r = crate::stats::sample_beta(a, b, &mut rng);
                }
                *counts.entry(s.dag.clone()).or_default() += 1.0 / sweeps as f64;
            }
            let prior = three_node_prior();
            let tv: f64 = 0.5 * prior.iter().map(|(d, w)| (counts.get(d).copied().unwrap_or(0.0) - w).abs()).sum::<f64>();
            assert!(tv < 0.04, "{mode:?}: total variation {tv}");
        }
    }

    #[test]
    fn refitting_kernel_recovers_the_graph_prior_without_data() {
        use crate::sampler::kernels::{update_effects, update_mixture};
        use crate::sampler::refit::update_edges_refit;
        use crate::sampler::rng::SweepStreams;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let size = InstanceSize { n: 0, p: 3, k: 1, m: 2, n_splines: 6, max_points: 1 };
        let (_, mut s) = random_instance(size, &mut rng);
        let hp = Hyperparameters { m: 2, k: 1, n_splines: 6, ..Default::default() };
        let config = McmcConfig { edge_prior: EdgePrior::Marginal, refit_proposals: Some(3), ..Default::default() };
        let mut counts: HashMap<Dag, f64> = HashMap::new();
        let sweeps = 20_000;
        for it in 0..sweeps {
            let streams = SweepStreams { seed: 12, chain: 0, iteration: it as u64 };
            update_mixture(&mut s, &hp, streams).unwrap();
            update_effects(&mut s, streams).unwrap();
            update_edges_refit(&mut s, &hp, &config, &mut rng).unwrap();
            *counts.entry(s.dag.clone()).or_default() += 1.0 / sweeps as f64;
        }
        let prior = three_node_prior();
        let tv: f64 = 0.5 * prior.iter().map(|(d, w)| (counts.get(d).copied().unwrap_or(0.0) - w).abs()).sum::<f64>();
        assert!(tv < 0.04, "total variation {tv}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn moves_keep_the_graph_acyclic_and_blocks_consistent(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let size = InstanceSize { p: 4, ..Default::default() };
            let (_, mut s) = random_instance(size, &mut rng);
            let hp = Hyperparameters::default();
            let config = McmcConfig { edge_proposals: Some(20), ..Default::default() };
            for _ in 0..5 {
                let stats = update_edges(&mut s, &hp, &config, &mut rng).unwrap();
                prop_assert!(stats.accepted <= stats.proposed);
                prop_assert!(is_acyclic(&s.dag.to_adjacency()).unwrap());
                prop_assert!(s.effects.validate(&s.dag).is_ok());
            }
        }
    }

    #[test]
    fn addable_pairs_exclude_both_directions() {
        let d = Dag::from_edges(3, &[(0, 1)]).unwrap();
        let pairs = addable_pairs(&d);
        assert_eq!(pairs.len(), 4);
        assert!(!pairs.contains(&(1, 0)) && !pairs.contains(&(0, 1)));
    }
}

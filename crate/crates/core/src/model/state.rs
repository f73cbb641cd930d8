//! Parameter containers for the functional linear non-Gaussian network.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::splines::{AdaptiveBasis, PenaltySystem, BIG_VARIANCE};

/// Prior hyperparameters and model dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub a_r: f64,
    pub b_r: f64,
    pub a_gamma: f64,
    pub b_gamma: f64,
    /// Dirichlet concentration of the mixture weights.
    pub alpha: f64,
    pub a_tau: f64,
    pub b_tau: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    /// Mixture components per (function, coefficient).
    pub m: usize,
    /// Number of cubic B-splines behind the adaptive basis.
    pub n_splines: usize,
    /// Basis truncation level.
    pub k: usize,
    pub big: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            a_r: 1.0,
            b_r: 1.0,
            a_gamma: 1.0,
            b_gamma: 1.0,
            alpha: 1.0,
            a_tau: 1.0,
            b_tau: 1.0,
            a_sigma: 0.01,
            b_sigma: 0.01,
            m: 5,
            n_splines: 20,
            k: 5,
            big: BIG_VARIANCE,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("a_r", self.a_r),
            ("b_r", self.b_r),
            ("a_gamma", self.a_gamma),
            ("b_gamma", self.b_gamma),
            ("alpha", self.alpha),
            ("a_tau", self.a_tau),
            ("b_tau", self.b_tau),
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("big", self.big),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfiguration(format!("{name} must be positive, got {v}")));
        }
        if self.m < 2 {
            return Err(Error::InvalidConfiguration(format!(
                "need at least 2 mixture components for identifiability, got {}",
                self.m
            )));
        }
        if self.n_splines < 4 {
            return Err(Error::InvalidConfiguration(format!(
                "need at least 4 cubic B-splines, got {}",
                self.n_splines
            )));
        }
        if self.k == 0 || self.k > self.n_splines {
            return Err(Error::InvalidConfiguration(format!(
                "truncation level K = {} must lie in 1..={}",
                self.k, self.n_splines
            )));
        }
        Ok(())
    }
}

/// How the edge-inclusion probability `r` enters the model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgePrior {
    /// `r ~ Beta(a_r, b_r)` is part of the state and sampled.
    #[default]
    SampledR,
    /// `r` is integrated out; the graph prior is the beta-binomial marginal.
    Marginal,
}

/// Discrete Gaussian scale mixture for the exogenous terms.
///
/// `weights[j * K + k]` and `variances[j * K + k]` have length `m`;
/// `assignments[(i * p + j) * K + k]` indexes the active component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureNoise {
    pub m: usize,
    pub weights: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
}

impl MixtureNoise {
    pub fn validate(&self, n: usize, p: usize, k: usize) -> Result<()> {
        if self.weights.len() != p * k || self.variances.len() != p * k {
            return Err(Error::InvalidState("mixture parameter count mismatch".into()));
        }
        if self.assignments.len() != n * p * k {
            return Err(Error::InvalidState("assignment count mismatch".into()));
        }
        for (w, t) in self.weights.iter().zip(&self.variances) {
            if w.len() != self.m || t.len() != self.m {
                return Err(Error::InvalidState("mixture component count mismatch".into()));
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > 1e-12 || w.iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidState(format!("mixture weights {w:?} not on the simplex")));
            }
            if t.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::InvalidState(format!("non-positive mixture variance in {t:?}")));
            }
        }
        if self.assignments.iter().any(|&c| c >= self.m) {
            return Err(Error::InvalidState("assignment index out of range".into()));
        }
        Ok(())
    }
}

/// `K × K` effect blocks `B_{jl}` (present only for edges `l -> j`) and the
/// global slab variance `gamma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectBlocks {
    p: usize,
    k: usize,
    blocks: Vec<Option<DMatrix<f64>>>,
    pub gamma: f64,
}

impl EffectBlocks {
    pub fn zeros(p: usize, k: usize, gamma: f64) -> Self {
        Self {
            p,
            k,
            blocks: vec![None; p * p],
            gamma,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `B_{jl}`, or `None` when `l -> j` is absent.
    #[inline]
    pub fn get(&self, j: usize, l: usize) -> Option<&DMatrix<f64>> {
        self.blocks[j * self.p + l].as_ref()
    }

    pub fn get_mut(&mut self, j: usize, l: usize) -> Option<&mut DMatrix<f64>> {
        self.blocks[j * self.p + l].as_mut()
    }

    pub fn set(&mut self, j: usize, l: usize, block: DMatrix<f64>) {
        debug_assert_eq!(block.shape(), (self.k, self.k));
        self.blocks[j * self.p + l] = Some(block);
    }

    pub fn clear(&mut self, j: usize, l: usize) {
        self.blocks[j * self.p + l] = None;
    }

    /// Number of slab entries, `K²` per present block.
    pub fn slab_entries(&self) -> usize {
        self.blocks.iter().flatten().count() * self.k * self.k
    }

    pub fn sum_squares(&self) -> f64 {
        self.blocks.iter().flatten().map(|b| b.norm_squared()).sum()
    }

    /// Checks that blocks are present exactly on the edges of `dag`.
    pub fn validate(&self, dag: &Dag) -> Result<()> {
        for j in 0..self.p {
            for l in 0..self.p {
                match (dag.entry(j, l), self.get(j, l)) {
                    (true, None) => {
                        return Err(Error::InvalidState(format!("missing effect block for {l} -> {j}")))
                    }
                    (false, Some(_)) => {
                        return Err(Error::InvalidState(format!("effect block without edge {l} -> {j}")))
                    }
                    (true, Some(b)) if b.iter().any(|v| !v.is_finite()) => {
                        return Err(Error::InvalidState(format!("non-finite effect block {l} -> {j}")))
                    }
                    _ => {}
                }
            }
        }
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidState(format!("gamma = {} must be positive", self.gamma)));
        }
        Ok(())
    }
}

/// Complete parameter state of the model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelState {
    pub dag: Dag,
    pub effects: EffectBlocks,
    pub noise: MixtureNoise,
    /// Latent basis coefficients; `z[i]` is `p × K`, row `j` = `Z_{ij}`.
    pub z: Vec<DMatrix<f64>>,
    /// Observation-noise variances, one per function.
    pub sigma: Vec<f64>,
    pub r: f64,
    pub basis: AdaptiveBasis<f64>,
    #[serde(with = "penalty_serde")]
    pub penalty: Arc<PenaltySystem<f64>>,
}

impl ModelState {
    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn p(&self) -> usize {
        self.dag.p()
    }

    pub fn k(&self) -> usize {
        self.basis.k()
    }

    /// Structural checks; the basis orthonormality is checked separately by
    /// [`AdaptiveBasis::check_invariants`].
    pub fn validate(&self) -> Result<()> {
        let (n, p, k) = (self.n(), self.p(), self.k());
        self.effects.validate(&self.dag)?;
        self.noise.validate(n, p, k)?;
        if self.z.iter().any(|z| z.shape() != (p, k)) {
            return Err(Error::InvalidState("latent coefficient shape mismatch".into()));
        }
        if self.sigma.len() != p || self.sigma.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidState(format!("invalid noise variances {:?}", self.sigma)));
        }
        if !(self.r > 0.0 && self.r < 1.0) {
            return Err(Error::InvalidState(format!("edge probability {} outside (0, 1)", self.r)));
        }
        if self.basis.dim() != self.penalty.dim() {
            return Err(Error::InvalidState("basis dimension mismatch".into()));
        }
        Ok(())
    }

    /// Index into the flat mixture parameter vectors.
    #[inline]
    pub fn jk(&self, j: usize, k: usize) -> usize {
        j * self.k() + k
    }

    /// Index into the flat assignment vector.
    #[inline]
    pub fn ijk(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.p() + j) * self.k() + k
    }

    /// Variance of the active mixture component for `ε_{ijk}`.
    #[inline]
    pub fn active_variance(&self, i: usize, j: usize, k: usize) -> f64 {
        let c = self.noise.assignments[self.ijk(i, j, k)];
        self.noise.variances[self.jk(j, k)][c]
    }
}

/// The penalty system is a deterministic function of the spline count, so
/// only that is stored.
mod penalty_serde {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct Stored {
        n_splines: usize,
        order: usize,
    }

    pub fn serialize<S: Serializer>(ps: &Arc<PenaltySystem<f64>>, s: S) -> Result<S::Ok, S::Error> {
        Stored {
            n_splines: ps.dim(),
            order: ps.basis().order(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Arc<PenaltySystem<f64>>, D::Error> {
        let stored = Stored::deserialize(d)?;
        let basis = crate::splines::BSplineBasis::uniform(stored.n_splines, stored.order)
            .map_err(serde::de::Error::custom)?;
        PenaltySystem::new(basis)
            .map(Arc::new)
            .map_err(serde::de::Error::custom)
    }
}

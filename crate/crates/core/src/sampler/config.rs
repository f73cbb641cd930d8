use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EdgePrior;

/// Relative proposal weights of the single-edge moves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoveWeights {
    pub add: f64,
    pub remove: f64,
    pub reverse: f64,
}

impl Default for MoveWeights {
    fn default() -> Self {
        Self {
            add: 4.0,
            remove: 4.0,
            reverse: 2.0,
        }
    }
}

/// Named presets for the chain length, thinning and threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// 5000 iterations, half burn-in, every 5th draw, threshold 0.5.
    #[default]
    SimDefault,
    /// 10000 iterations, half burn-in, every 10th draw, threshold 0.9.
    Eeg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Posterior inclusion probability at which an edge enters the point estimate.
    pub edge_threshold: f64,
    pub move_weights: MoveWeights,
    pub chains: usize,
    pub edge_prior: EdgePrior,
    /// Edge proposals per sweep; `p(p-1)/2` when `None`.
    pub edge_proposals: Option<usize>,
    /// Proposals per sweep of the move that also refits the affected nodes;
    /// `p` when `None`, and `Some(0)` disables it.
    #[serde(default)]
    pub refit_proposals: Option<usize>,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self::profile(Profile::SimDefault)
    }
}

impl McmcConfig {
    pub fn profile(profile: Profile) -> Self {
        let (iterations, thin, edge_threshold) = match profile {
            Profile::SimDefault => (5000, 5, 0.5),
            Profile::Eeg => (10000, 10, 0.9),
        };
        Self {
            iterations,
            burn_in: iterations / 2,
            thin,
            seed: 0,
            edge_threshold,
            move_weights: MoveWeights::default(),
            chains: 1,
            edge_prior: EdgePrior::SampledR,
            edge_proposals: None,
            refit_proposals: None,
        }
    }

    /// Sets the chain length and resets the burn-in to half of it.
    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self.burn_in = iterations / 2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidConfiguration(format!(
                "burn-in {} must be smaller than the {} iterations",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfiguration("thinning interval must be >= 1".into()));
        }
        if !(self.edge_threshold > 0.0 && self.edge_threshold < 1.0) {
            return Err(Error::InvalidConfiguration(format!(
                "edge threshold {} outside (0, 1)",
                self.edge_threshold
            )));
        }
        if self.chains == 0 {
            return Err(Error::InvalidConfiguration("need at least one chain".into()));
        }
        let w = self.move_weights;
        let finite = [w.add, w.remove, w.reverse].iter().all(|v| v.is_finite() && *v >= 0.0);
        // Add and remove are each other's reverse moves.
        if !finite || !(w.add > 0.0) || !(w.remove > 0.0) {
            return Err(Error::InvalidConfiguration(format!(
                "move weights {w:?} need positive add and remove and nonnegative reverse"
            )));
        }
        Ok(())
    }

    /// Whether the draw after iteration `iter` (zero-based) is retained.
    pub fn is_retained(&self, iter: usize) -> bool {
        iter >= self.burn_in && (iter - self.burn_in).is_multiple_of(self.thin)
    }

    pub fn retained_count(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }
}

use std::sync::Arc;

use rayon::prelude::*;

use super::cache::DataCache;
use super::checkpoint::{Checkpoint, CHECKPOINT_VERSION};
use super::config::McmcConfig;
use super::edges::{update_edges, EdgeMoveStats};
use super::refit::update_edges_refit;
use super::init::initialize;
use super::kernels::{update_basis, update_edge_probability, update_effects, update_latent, update_mixture, update_noise};
use super::rng::{Block, SweepStreams};
use super::summary::{PosteriorSummary, SummaryBuilder};
use crate::error::{Error, Result};
use crate::model::{loglik_latent, log_prior, FunctionalDataset, Hyperparameters, ModelState};
use crate::splines::PenaltySystem;

/// Tolerance of the per-sweep invariant checks in debug builds.
const INVARIANT_TOL: f64 = 1e-10;

/// One Markov chain over the model parameters.
pub struct Sampler {
    cache: DataCache,
    hp: Hyperparameters,
    config: McmcConfig,
    chain: u64,
    state: ModelState,
    iteration: usize,
    edge_stats: EdgeMoveStats,
    refit_stats: EdgeMoveStats,
}

impl Sampler {
    pub fn new(dataset: &FunctionalDataset, hp: &Hyperparameters, config: &McmcConfig, chain: u64) -> Result<Self> {
        hp.validate()?;
        config.validate()?;
        let penalty = Arc::new(PenaltySystem::cubic(hp.n_splines)?);
        let cache = DataCache::new(dataset, &penalty)?;
        let mut rng = SweepStreams { seed: config.seed, chain, iteration: 0 }.block(Block::Init);
        let state = initialize(&cache, hp, penalty, &mut rng)?;
        Ok(Self {
            cache,
            hp: hp.clone(),
            config: config.clone(),
            chain,
            state,
            iteration: 0,
            edge_stats: EdgeMoveStats::default(),
            refit_stats: EdgeMoveStats::default(),
        })
    }

    /// Continues a chain from a checkpoint (or any valid state).
    pub fn from_checkpoint(dataset: &FunctionalDataset, config: &McmcConfig, checkpoint: Checkpoint) -> Result<Self> {
        config.validate()?;
        let hp = checkpoint.hyperparameters;
        hp.validate()?;
        let state = checkpoint.state;
        state.validate()?;
        if state.n() != dataset.n() || state.p() != dataset.p() || state.k() != hp.k {
            return Err(Error::DimensionMismatch("checkpoint does not match the dataset".into()));
        }
        let cache = DataCache::new(dataset, &state.penalty)?;
        Ok(Self {
            cache,
            hp,
            config: McmcConfig { seed: checkpoint.seed, ..config.clone() },
            chain: checkpoint.chain,
            state,
            iteration: checkpoint.iteration,
            edge_stats: EdgeMoveStats::default(),
            refit_stats: EdgeMoveStats::default(),
        })
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn cache(&self) -> &DataCache {
        &self.cache
    }

    /// Completed sweeps.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Counts of the single-edge kernel.
    pub fn edge_stats(&self) -> EdgeMoveStats {
        self.edge_stats
    }

    /// Counts of the refitting graph kernel.
    pub fn refit_stats(&self) -> EdgeMoveStats {
        self.refit_stats
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            seed: self.config.seed,
            chain: self.chain,
            iteration: self.iteration,
            hyperparameters: self.hp.clone(),
            state: self.state.clone(),
        }
    }

    /// Log joint density with the assignments summed out.
    pub fn log_joint(&self) -> Result<f64> {
        let projected = self.cache.projected_grams(&self.state.basis);
        Ok(self.cache.loglik_observation(&self.state, &projected)?
            + loglik_latent(&self.state)?
            + log_prior(&self.state, &self.hp, self.config.edge_prior))
    }

    /// One systematic scan: Z, mixture, effects, graph (both kernels), r,
    /// basis, noise.
    pub fn sweep(&mut self) -> Result<()> {
        let streams = SweepStreams {
            seed: self.config.seed,
            chain: self.chain,
            iteration: self.iteration as u64,
        };
        self.sweep_blocks(streams).map_err(|e| {
            log::error!(
                "chain {} sweep {} failed: {e}; edges {:?}, sigma {:?}, gamma {}, lambda {:?}",
                self.chain,
                self.iteration,
                self.state.dag.edges(),
                self.state.sigma,
                self.state.effects.gamma,
                self.state.basis.lambda
            );
            Error::Sampler {
                chain: self.chain,
                iteration: self.iteration,
                source: Box::new(e),
            }
        })?;
        self.iteration += 1;
        Ok(())
    }

    fn sweep_blocks(&mut self, streams: SweepStreams) -> Result<()> {
        let s = &mut self.state;
        update_latent(s, &self.cache, streams)?;
        update_mixture(s, &self.hp, streams)?;
        update_effects(s, streams)?;
        let stats = update_edges(s, &self.hp, &self.config, &mut streams.block(Block::Edges))?;
        self.edge_stats.merge(stats);
        let stats = update_edges_refit(s, &self.hp, &self.config, &mut streams.block(Block::Refit))?;
        self.refit_stats.merge(stats);
        update_edge_probability(s, &self.hp, self.config.edge_prior, streams);
        update_basis(s, &self.cache, streams)?;
        update_noise(s, &self.cache, &self.hp, streams);
        if cfg!(debug_assertions) {
            s.validate()?;
            s.basis.check_invariants(s.penalty.gram(), INVARIANT_TOL)?;
        }
        Ok(())
    }

    /// Runs the remaining sweeps up to `config.iterations`, summarizing the
    /// retained draws.
    pub fn run(&mut self) -> Result<PosteriorSummary> {
        let mut builder = SummaryBuilder::new(self.state.p(), self.state.k(), self.state.noise.m);
        while self.iteration < self.config.iterations {
            let it = self.iteration;
            self.sweep()?;
            if self.config.is_retained(it) {
                builder.push(&self.state, self.log_joint()?);
            }
        }
        Ok(builder.finish(self.edge_stats.acceptance_rate(), self.refit_stats.acceptance_rate()))
    }
}

/// Runs chain 0 from its initial state.
pub fn run_chain(dataset: &FunctionalDataset, hp: &Hyperparameters, config: &McmcConfig) -> Result<PosteriorSummary> {
    Sampler::new(dataset, hp, config, 0)?.run()
}

/// Runs `config.chains` independent chains in parallel.
pub fn run_chains(dataset: &FunctionalDataset, hp: &Hyperparameters, config: &McmcConfig) -> Result<Vec<(PosteriorSummary, Checkpoint)>> {
    config.validate()?;
    (0..config.chains as u64)
        .into_par_iter()
        .map(|c| {
            let mut s = Sampler::new(dataset, hp, config, c)?;
            let summary = s.run()?;
            Ok((summary, s.checkpoint()))
        })
        .collect()
}

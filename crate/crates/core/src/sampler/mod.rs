//! Markov chain Monte Carlo for the full posterior.
//!
//! A sweep updates, in order: latent coefficients, mixture assignments and
//! parameters, effect blocks, the graph (single-edge moves, then moves that
//! also refit the affected nodes; see [`refit`]), the edge probability, the
//! basis with its smoothness parameters, and the noise and slab variances.

mod cache;
mod chain;
mod checkpoint;
pub mod conditionals;
mod config;
mod edges;
mod init;
pub mod kernels;
pub mod refit;
pub mod rng;
mod summary;

pub use cache::{CurveStats, DataCache};
pub use chain::{run_chain, run_chains, Sampler};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{McmcConfig, MoveWeights, Profile};
pub use edges::{update_edges, EdgeMoveStats};
pub use init::{initialize, select_k, smooth_curves, smoothing_parameter, FunctionalPca, FVE_TARGET};
pub use summary::{average_ppi, median_probability_model, quantile, Interval, MixtureSummary, PosteriorSummary};

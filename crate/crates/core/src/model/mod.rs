//! The generative model: latent SEM on basis coefficients, noisy grid
//! observations, priors, and the synthetic-data generator.

mod dataset;
mod density;
pub mod fixtures;
mod simulate;
mod state;

pub use dataset::{default_labels, Curve, FunctionalDataset};
pub use density::{
    log_assignment_prior, log_basis_prior, log_edge_prior, log_edge_prior_counts,
    log_effect_prior, log_joint, log_joint_augmented, log_mixture_prior, log_prior,
    log_sigma_prior, loglik_latent, loglik_latent_given_assignments, loglik_observation,
    sem_residual,
};
pub use simulate::{
    even_grid, nominal_lambdas, simulate, trapezoid_weights, GridMode, Simulation,
    SimulationConfig, MIN_UNEVEN_POINTS,
};
pub use state::{EdgePrior, EffectBlocks, Hyperparameters, MixtureNoise, ModelState};

//! Filtering strategies over a network of agents.
//!
//! * the optimal centralized HMM filter, which sees every agent's data;
//! * the diffusion HMM filter (evolve, gamma-scaled adapt, geometric combine);
//! * adaptive social learning, a baseline without a prediction stage.
//!
//! All belief algebra happens on normalized log-probabilities.

mod belief;
mod runner;
mod steps;

pub use belief::Belief;
pub use runner::{
    run_filters, CentralizedHistory, FilterBank, FilterHistories, InitialBeliefs, StrategyHistory, StrategyKind,
    StrategySpec,
};
pub use steps::{
    asl_step, centralized_adapt, centralized_evolve, centralized_step, diffusion_adapt, diffusion_combine,
    diffusion_evolve, diffusion_step, AslConfig, DiffusionConfig, LogLikelihoods, NetworkBeliefState,
};

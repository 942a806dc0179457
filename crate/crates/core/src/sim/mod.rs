//! Monte Carlo experiments: configuration, keyed random streams, the run
//! engine and its file exports.

pub mod config;
pub mod experiment;
pub mod export;
pub mod rng;

pub use config::{ExperimentConfig, GammaSpec, Network, Scenario, StrategyTemplate};
pub use experiment::{
    gamma_label, gamma_sweep, risk_vs_topology_sweep, run_experiment, sample_artifact, sample_run_data,
    simulate_network, tracking_gap, ExperimentReport, GammaPoint, GammaSweep, NetworkOutcome, RunArtifact,
    RunSettings, StrategyOutcome,
};
pub use rng::{stream, Purpose};

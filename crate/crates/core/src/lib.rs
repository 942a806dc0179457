//! Distributed hidden-Markov-model filtering over networks of agents.
//!
//! Agents track a hidden Markov state by repeatedly predicting with the
//! known transition model, applying a step-size scaled Bayes update with
//! their private observation, and geometrically pooling their neighbors'
//! intermediate beliefs. The crate ships the optimal centralized filter as
//! the reference, an adaptive social learning baseline, a seeded Monte Carlo
//! harness measuring KL risks against the centralized posterior, and the
//! asymptotic risk bounds these risks are checked against.
//!
//! Numerical code is generic over [`Scalar`] (`f32`/`f64`); the `*64`
//! aliases below are what the simulator and CLI use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod filters;
pub mod graph;
pub mod metrics;
pub mod models;
pub mod scalar;
pub mod sim;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Belief64 = filters::Belief<f64>;
pub type Belief32 = filters::Belief<f32>;
pub type CombinationMatrix64 = graph::CombinationMatrix<f64>;
pub type CombinationMatrix32 = graph::CombinationMatrix<f32>;
pub type TransitionModel64 = models::TransitionModel<f64>;
pub type TransitionModel32 = models::TransitionModel<f32>;
pub type TruncatedGaussian64 = models::TruncatedGaussian<f64>;
pub type TruncatedGaussian32 = models::TruncatedGaussian<f32>;
pub type RiskTrace64 = metrics::RiskTrace<f64>;
pub type TheoremBound64 = metrics::TheoremBound<f64>;

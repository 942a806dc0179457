#![allow(dead_code)]

use std::path::PathBuf;

use diffusion_hmm::filters::{Belief, FilterBank, InitialBeliefs, StrategySpec};
use diffusion_hmm::graph::{metropolis_weights, random_connected_topology, CombinationMatrix};
use diffusion_hmm::models::{sample_observations, sample_trajectory, DiscreteLikelihood, TransitionModel};
use diffusion_hmm::sim::ExperimentConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

pub fn shipped_config(name: &str, overrides: &[&str]) -> ExperimentConfig {
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    ExperimentConfig::load(&config_path(name), &o).expect("shipped config loads")
}

pub const SHIPPED_CONFIGS: [&str; 4] = ["fig2.cfg", "fig3.cfg", "table1.cfg", "gamma_sweep.cfg"];

/// Probability vector with every entry at least `floor / n` before
/// normalization.
pub fn random_simplex<R: Rng>(n: usize, floor: f64, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| floor + rng.random::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Transition matrix with strictly positive entries, hence kappa < 1.
pub fn random_ergodic_transition<R: Rng>(h: usize, rng: &mut R) -> TransitionModel<f64> {
    let rows = (0..h).map(|_| random_simplex(h, 0.05, rng)).collect();
    TransitionModel::new(rows).unwrap()
}

pub fn random_discrete_likelihood<R: Rng>(h: usize, symbols: usize, rng: &mut R) -> DiscreteLikelihood<f64> {
    DiscreteLikelihood::new((0..h).map(|_| random_simplex(symbols, 0.05, rng)).collect()).unwrap()
}

pub fn random_belief<R: Rng>(h: usize, rng: &mut R) -> Belief<f64> {
    Belief::from_probabilities(&random_simplex(h, 0.01, rng)).unwrap()
}

/// Metropolis combination matrix of a random connected graph.
pub fn random_combination<R: Rng>(k: usize, rng: &mut R) -> CombinationMatrix<f64> {
    if k == 1 {
        return CombinationMatrix::uniform(1);
    }
    let density = 0.2 + 0.8 * rng.random::<f64>();
    let topo = random_connected_topology(k, density, rng.random()).unwrap();
    metropolis_weights(&topo).unwrap()
}

pub fn random_permutation<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Largest per-entry gap between the diffusion filter (uniform weights,
/// `gamma = K`, shared prior) and the centralized filter over `steps` steps
/// of a random instance.
pub fn centralized_equivalence_gap(seed: u64, steps: usize) -> (usize, usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = rng.random_range(2..=5);
    let k = rng.random_range(1..=5);
    let symbols = rng.random_range(2..=6);
    let transition = random_ergodic_transition(h, &mut rng);
    let likelihoods: Vec<_> = (0..k).map(|_| random_discrete_likelihood(h, symbols, &mut rng)).collect();
    let prior = random_belief(h, &mut rng);
    let a = CombinationMatrix::uniform(k);
    let trajectory = sample_trajectory(&transition, steps, &mut rng);
    let mut rngs: Vec<ChaCha8Rng> = (0..k).map(|_| ChaCha8Rng::seed_from_u64(rng.random())).collect();
    let obs = sample_observations(&likelihoods, &trajectory, &mut rngs).unwrap();
    let mut bank = FilterBank::new(
        &transition,
        &likelihoods,
        &a,
        vec![StrategySpec::diffusion("dhmm", k as f64)],
        &InitialBeliefs::shared(prior, k),
    )
    .unwrap();
    let mut gap: f64 = 0.0;
    for row in &obs {
        bank.step(row).unwrap();
        let c = bank.centralized().probabilities();
        for b in bank.beliefs(0) {
            for (x, y) in b.probabilities().iter().zip(&c) {
                gap = gap.max((x - y).abs());
            }
        }
    }
    (h, k, gap)
}

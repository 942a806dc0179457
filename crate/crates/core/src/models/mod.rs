//! Hidden Markov chain and per-agent observation models.

mod likelihood;
mod transition;

pub use likelihood::{
    standard_normal_cdf, standard_normal_mass, DiscreteLikelihood, Likelihood, TruncatedGaussian,
};
pub use transition::{sample_trajectory, total_variation, StateTrajectory, TransitionModel};

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Draws one observation per agent per time step, `rows[i][k] ~ L_k(. | theta_i)`.
///
/// Agent `k` consumes only `rngs[k]`, so each agent's stream is independent
/// of how many other agents are simulated.
pub fn sample_observations<S, L, R>(
    likelihoods: &[L],
    trajectory: &StateTrajectory,
    rngs: &mut [R],
) -> Result<Vec<Vec<L::Observation>>>
where
    S: Scalar,
    L: Likelihood<S>,
    R: Rng,
{
    if rngs.len() != likelihoods.len() {
        return Err(Error::Shape(format!(
            "{} random streams for {} agents",
            rngs.len(),
            likelihoods.len()
        )));
    }
    Ok(trajectory
        .states()
        .iter()
        .map(|&theta| {
            likelihoods
                .iter()
                .zip(rngs.iter_mut())
                .map(|(l, rng)| l.sample(theta, rng))
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn observations_follow_states_and_are_reproducible() {
        let l = vec![TruncatedGaussian::<f64>::benchmark(); 3];
        let traj = StateTrajectory::new(vec![0, 1, 1, 0], 2).unwrap();
        let draw = || {
            let mut rngs: Vec<_> = (0..3).map(ChaCha8Rng::seed_from_u64).collect();
            sample_observations(&l, &traj, &mut rngs).unwrap()
        };
        let a = draw();
        assert_eq!(a.len(), 4);
        assert!(a.iter().all(|r| r.len() == 3));
        let b = draw();
        let bits = |m: &Vec<Vec<f64>>| m.iter().flatten().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn stream_count_must_match_agents() {
        let l = vec![TruncatedGaussian::<f64>::benchmark(); 2];
        let traj = StateTrajectory::new(vec![0], 2).unwrap();
        let mut rngs = vec![ChaCha8Rng::seed_from_u64(0)];
        assert!(sample_observations(&l, &traj, &mut rngs).is_err());
    }
}

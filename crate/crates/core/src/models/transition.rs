use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-stochastic Markov kernel over `H >= 2` hypotheses.
///
/// Entry `(prev, next)` holds `T(next | prev)`. The log matrix is cached for
/// the log-domain prediction step.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel<S> {
    num_hypotheses: usize,
    matrix: Vec<S>,
    log_matrix: Vec<S>,
    initial: Vec<S>,
}

impl<S: Scalar> TransitionModel<S> {
    /// Builds a model from `rows[prev][next]`, with a uniform initial law.
    pub fn new(rows: Vec<Vec<S>>) -> Result<Self> {
        let h = rows.len();
        let initial = vec![S::one() / S::of_usize(h.max(1)); h];
        Self::with_initial(rows, initial)
    }

    pub fn with_initial(rows: Vec<Vec<S>>, initial: Vec<S>) -> Result<Self> {
        let h = rows.len();
        if h < 2 {
            return Err(Error::InvalidTransition(format!("need at least 2 hypotheses, got {h}")));
        }
        let tol = S::of(1e-12).max(S::epsilon() * S::of_usize(4 * h));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != h {
                return Err(Error::InvalidTransition(format!("row {i} has {} entries, expected {h}", row.len())));
            }
            check_probability_vector(row, tol).map_err(|m| Error::InvalidTransition(format!("row {i}: {m}")))?;
        }
        if initial.len() != h {
            return Err(Error::InvalidTransition(format!(
                "initial distribution has {} entries, expected {h}",
                initial.len()
            )));
        }
        check_probability_vector(&initial, tol)
            .map_err(|m| Error::InvalidTransition(format!("initial distribution: {m}")))?;
        let matrix: Vec<S> = rows.into_iter().flatten().collect();
        let log_matrix = matrix.iter().map(|p| p.ln()).collect();
        Ok(Self {
            num_hypotheses: h,
            matrix,
            log_matrix,
            initial,
        })
    }

    /// Two-state chain that stays with probability `1 - delta`.
    pub fn binary_symmetric(delta: S) -> Result<Self> {
        if !(delta >= S::zero() && delta <= S::one()) {
            return Err(Error::InvalidTransition(format!("delta must lie in [0, 1], got {delta}")));
        }
        let stay = S::one() - delta;
        Self::new(vec![vec![stay, delta], vec![delta, stay]])
    }

    pub fn identity(num_hypotheses: usize) -> Result<Self> {
        let rows = (0..num_hypotheses)
            .map(|i| (0..num_hypotheses).map(|j| if i == j { S::one() } else { S::zero() }).collect())
            .collect();
        Self::new(rows)
    }

    pub fn set_initial(self, initial: Vec<S>) -> Result<Self> {
        Self::with_initial(self.rows(), initial)
    }

    pub fn num_hypotheses(&self) -> usize {
        self.num_hypotheses
    }

    /// `T(next | prev)`.
    pub fn prob(&self, prev: usize, next: usize) -> S {
        self.matrix[prev * self.num_hypotheses + next]
    }

    pub fn log_prob(&self, prev: usize, next: usize) -> S {
        self.log_matrix[prev * self.num_hypotheses + next]
    }

    pub fn row(&self, prev: usize) -> &[S] {
        let h = self.num_hypotheses;
        &self.matrix[prev * h..(prev + 1) * h]
    }

    pub fn rows(&self) -> Vec<Vec<S>> {
        (0..self.num_hypotheses).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn initial_distribution(&self) -> &[S] {
        &self.initial
    }

    /// Dobrushin ergodicity coefficient: the largest total-variation
    /// distance between two rows.
    pub fn dobrushin_coefficient(&self) -> S {
        let h = self.num_hypotheses;
        let mut kappa = S::zero();
        for a in 0..h {
            for b in (a + 1)..h {
                let tv = total_variation(self.row(a), self.row(b));
                if tv > kappa {
                    kappa = tv;
                }
            }
        }
        kappa.min(S::one())
    }

    /// Stationary law by power iteration from the uniform vector. For chains
    /// with several recurrent classes this returns the limit reached from
    /// uniform, which is still invariant.
    pub fn stationary_distribution(&self) -> Vec<S> {
        let h = self.num_hypotheses;
        let mut p = vec![S::one() / S::of_usize(h); h];
        for _ in 0..100_000 {
            let next: Vec<S> = (0..h).map(|j| (0..h).map(|i| p[i] * self.prob(i, j)).sum()).collect();
            // average with the previous iterate so periodic chains settle
            let next: Vec<S> = next.iter().zip(&p).map(|(a, b)| (*a + *b) / S::of(2.0)).collect();
            let diff: S = next.iter().zip(&p).map(|(a, b)| (*a - *b).abs()).sum();
            p = next;
            if diff <= S::epsilon() {
                break;
            }
        }
        let total: S = p.iter().copied().sum();
        p.iter().map(|v| *v / total).collect()
    }

    /// Draws the successor of `prev`.
    pub fn sample_next<R: Rng + ?Sized>(&self, prev: usize, rng: &mut R) -> usize {
        sample_categorical(self.row(prev), rng)
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.initial, rng)
    }
}

/// `1/2 sum |p - q|`.
pub fn total_variation<S: Scalar>(p: &[S], q: &[S]) -> S {
    let half = S::of(0.5);
    half * p.iter().zip(q).map(|(a, b)| (*a - *b).abs()).sum::<S>()
}

fn check_probability_vector<S: Scalar>(p: &[S], tol: S) -> std::result::Result<(), String> {
    if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(**v >= S::zero())) {
        return Err(format!("entry {i} = {v} is negative"));
    }
    let sum: S = p.iter().copied().sum();
    if (sum - S::one()).abs() > tol {
        return Err(format!("entries sum to {sum}, expected 1"));
    }
    Ok(())
}

fn sample_categorical<S: Scalar, R: Rng + ?Sized>(probs: &[S], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.iter().enumerate() {
        let p = p.as_f64();
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_positive
}

/// Realized hidden states `theta_1, ..., theta_N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateTrajectory {
    states: Vec<usize>,
}

impl StateTrajectory {
    pub fn new(states: Vec<usize>, num_hypotheses: usize) -> Result<Self> {
        if let Some(&bad) = states.iter().find(|&&s| s >= num_hypotheses) {
            return Err(Error::HypothesisOutOfRange {
                hypothesis: bad,
                num_hypotheses,
            });
        }
        Ok(Self { states })
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Samples `length` states: the first from the initial law, each following
/// one from the row of its predecessor.
pub fn sample_trajectory<S: Scalar, R: Rng + ?Sized>(
    transition: &TransitionModel<S>,
    length: usize,
    rng: &mut R,
) -> StateTrajectory {
    let mut states = Vec::with_capacity(length);
    if length > 0 {
        let mut s = transition.sample_initial(rng);
        states.push(s);
        for _ in 1..length {
            s = transition.sample_next(s, rng);
            states.push(s);
        }
    }
    StateTrajectory { states }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn binary_symmetric_rows() {
        let t = TransitionModel::binary_symmetric(0.1f64).unwrap();
        assert_eq!(t.rows(), vec![vec![0.9, 0.1], vec![0.1, 0.9]]);
        assert_eq!(TransitionModel::binary_symmetric(0.0f64).unwrap(), TransitionModel::identity(2).unwrap());
        assert_eq!(TransitionModel::binary_symmetric(0.5f64).unwrap().rows(), vec![vec![0.5; 2]; 2]);
        assert!(TransitionModel::binary_symmetric(1.5f64).is_err());
        assert!(TransitionModel::binary_symmetric(-0.1f64).is_err());
    }

    #[test]
    fn dobrushin_values() {
        assert_eq!(TransitionModel::binary_symmetric(0.1f64).unwrap().dobrushin_coefficient(), 0.8);
        assert_eq!(TransitionModel::<f64>::identity(3).unwrap().dobrushin_coefficient(), 1.0);
        assert_eq!(TransitionModel::binary_symmetric(0.5f64).unwrap().dobrushin_coefficient(), 0.0);
    }

    #[test]
    fn rejects_malformed_rows() {
        assert!(TransitionModel::new(vec![vec![1.0f64]]).is_err());
        assert!(TransitionModel::new(vec![vec![0.5f64, 0.4], vec![0.5, 0.5]]).is_err());
        assert!(TransitionModel::new(vec![vec![1.2f64, -0.2], vec![0.5, 0.5]]).is_err());
        assert!(TransitionModel::new(vec![vec![1.0f64, 0.0], vec![0.5]]).is_err());
    }

    #[test]
    fn identity_chain_from_point_mass_stays_put() {
        let t = TransitionModel::<f64>::identity(2).unwrap().set_initial(vec![1.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let traj = sample_trajectory(&t, 500, &mut rng);
        assert!(traj.states().iter().all(|&s| s == 0));
    }

    #[test]
    fn empirical_flip_rate_and_occupancy() {
        let t = TransitionModel::binary_symmetric(0.1f64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let traj = sample_trajectory(&t, 100_000, &mut rng);
        let flips = traj.states().windows(2).filter(|w| w[0] != w[1]).count();
        let rate = flips as f64 / 99_999.0;
        assert!((rate - 0.1).abs() < 0.01, "flip rate {rate}");

        let t = TransitionModel::binary_symmetric(0.5f64).unwrap();
        let traj = sample_trajectory(&t, 100_000, &mut rng);
        let ones = traj.states().iter().filter(|&&s| s == 1).count() as f64 / 1e5;
        assert!((ones - 0.5).abs() < 0.01, "occupancy {ones}");
    }

    #[test]
    fn stationary_distribution_of_asymmetric_chain() {
        // pi = (b, a) / (a + b) for the chain [[1-a, a], [b, 1-b]]
        let t = TransitionModel::new(vec![vec![0.7f64, 0.3], vec![0.1, 0.9]]).unwrap();
        let pi = t.stationary_distribution();
        assert!((pi[0] - 0.25).abs() < 1e-12);
        assert!((pi[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn trajectory_rejects_out_of_range_states() {
        assert!(StateTrajectory::new(vec![0, 2], 2).is_err());
        assert_eq!(StateTrajectory::new(vec![], 2).unwrap().len(), 0);
    }
}

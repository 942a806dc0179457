use crate::error::{Error, Result};
use crate::scalar::{normalize_log, Scalar};

/// Probability vector over hypotheses, held as normalized log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief<S> {
    log_probs: Vec<S>,
}

impl<S: Scalar> Belief<S> {
    pub fn uniform(num_hypotheses: usize) -> Self {
        let v = -S::of_usize(num_hypotheses).ln();
        Self {
            log_probs: vec![v; num_hypotheses],
        }
    }

    /// Normalizes arbitrary nonnegative weights. Zero entries are allowed
    /// here; filters reject them through [`Belief::check_positive`].
    pub fn from_probabilities(weights: &[S]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Shape("belief over zero hypotheses".into()));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= S::zero()) || !w.is_finite()) {
            return Err(Error::Shape(format!("belief weight {i} = {w} is not a finite nonnegative number")));
        }
        let total: S = weights.iter().copied().sum();
        if !(total > S::zero()) {
            return Err(Error::Shape("belief weights sum to zero".into()));
        }
        Ok(Self::from_log_weights(weights.iter().map(|w| w.ln()).collect()))
    }

    /// Normalizes unnormalized log-weights in place (log-sum-exp).
    pub fn from_log_weights(mut log_weights: Vec<S>) -> Self {
        normalize_log(&mut log_weights);
        Self { log_probs: log_weights }
    }

    pub fn point_mass(num_hypotheses: usize, hypothesis: usize) -> Self {
        let mut v = vec![S::neg_infinity(); num_hypotheses];
        v[hypothesis] = S::zero();
        Self { log_probs: v }
    }

    pub fn num_hypotheses(&self) -> usize {
        self.log_probs.len()
    }

    pub fn log_probabilities(&self) -> &[S] {
        &self.log_probs
    }

    pub fn log_prob(&self, hypothesis: usize) -> S {
        self.log_probs[hypothesis]
    }

    pub fn prob(&self, hypothesis: usize) -> S {
        self.log_probs[hypothesis].exp()
    }

    pub fn probabilities(&self) -> Vec<S> {
        self.log_probs.iter().map(|v| v.exp()).collect()
    }

    /// Most probable hypothesis, lowest index on ties.
    pub fn map_hypothesis(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.log_probs.iter().enumerate() {
            if *v > self.log_probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.log_probs.iter().all(|v| v.is_finite())
    }

    /// Initial beliefs must put positive mass on every hypothesis.
    pub fn check_positive(&self) -> Result<()> {
        match self.log_probs.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonPositivePrior {
                index,
                value: self.log_probs[index].exp().as_f64(),
            }),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_weights() {
        let b = Belief::from_probabilities(&[1.0f64, 3.0]).unwrap();
        assert!((b.prob(0) - 0.25).abs() < 1e-15);
        assert!((b.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_degenerate_weights() {
        assert!(Belief::<f64>::from_probabilities(&[]).is_err());
        assert!(Belief::from_probabilities(&[0.0f64, 0.0]).is_err());
        assert!(Belief::from_probabilities(&[-1.0f64, 2.0]).is_err());
        assert!(Belief::from_probabilities(&[f64::NAN, 2.0]).is_err());
    }

    #[test]
    fn zero_entry_fails_positivity() {
        let b = Belief::from_probabilities(&[0.0f64, 1.0]).unwrap();
        assert!(matches!(b.check_positive(), Err(Error::NonPositivePrior { index: 0, .. })));
        assert!(Belief::<f64>::uniform(3).check_positive().is_ok());
    }

    #[test]
    fn map_breaks_ties_low() {
        assert_eq!(Belief::<f64>::uniform(4).map_hypothesis(), 0);
        assert_eq!(Belief::from_probabilities(&[0.2f64, 0.4, 0.4]).unwrap().map_hypothesis(), 1);
        assert_eq!(Belief::<f64>::point_mass(3, 2).map_hypothesis(), 2);
    }
}

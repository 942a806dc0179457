//! Per-step belief updates. Every function is pure: inputs are borrowed and
//! fresh beliefs are returned.

use crate::error::{Error, Result};
use crate::filters::Belief;
use crate::graph::CombinationMatrix;
use crate::models::{Likelihood, TransitionModel};
use crate::scalar::{log_sum_exp, Scalar};

/// `log L_k(xi_k | theta)` for every agent `k` (rows) and hypothesis (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct LogLikelihoods<S> {
    num_hypotheses: usize,
    values: Vec<S>,
}

impl<S: Scalar> LogLikelihoods<S> {
    pub fn evaluate<L: Likelihood<S>>(likelihoods: &[L], observations: &[L::Observation]) -> Result<Self> {
        if likelihoods.len() != observations.len() {
            return Err(Error::Shape(format!(
                "{} observations for {} agents",
                observations.len(),
                likelihoods.len()
            )));
        }
        let h = likelihoods.first().map_or(0, |l| l.num_hypotheses());
        let mut values = Vec::with_capacity(h * likelihoods.len());
        for (l, obs) in likelihoods.iter().zip(observations) {
            if l.num_hypotheses() != h {
                return Err(Error::Shape("agents disagree on the number of hypotheses".into()));
            }
            for theta in 0..h {
                values.push(l.log_likelihood(obs, theta)?);
            }
        }
        Ok(Self { num_hypotheses: h, values })
    }

    /// Wraps precomputed rows (`rows[k][theta]`).
    pub fn from_rows(rows: Vec<Vec<S>>) -> Result<Self> {
        let h = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != h) {
            return Err(Error::Shape("ragged log-likelihood rows".into()));
        }
        Ok(Self {
            num_hypotheses: h,
            values: rows.into_iter().flatten().collect(),
        })
    }

    pub fn num_agents(&self) -> usize {
        self.values.len().checked_div(self.num_hypotheses).unwrap_or(0)
    }

    pub fn num_hypotheses(&self) -> usize {
        self.num_hypotheses
    }

    pub fn agent(&self, k: usize) -> &[S] {
        &self.values[k * self.num_hypotheses..(k + 1) * self.num_hypotheses]
    }

    /// Joint log-likelihood `sum_k log L_k(xi_k | theta)` (conditional independence).
    pub fn joint(&self) -> Vec<S> {
        let h = self.num_hypotheses;
        (0..h)
            .map(|theta| (0..self.num_agents()).map(|k| self.values[k * h + theta]).sum())
            .collect()
    }

    /// `max |log L_l(xi_l | theta)|` over all agents and hypotheses.
    pub fn sup_norm(&self) -> S {
        self.values.iter().map(|v| v.abs()).fold(S::zero(), S::max)
    }
}

fn check_hypotheses<S: Scalar>(b: &Belief<S>, h: usize) -> Result<()> {
    if b.num_hypotheses() != h {
        return Err(Error::Shape(format!(
            "belief over {} hypotheses, model has {h}",
            b.num_hypotheses()
        )));
    }
    Ok(())
}

/// Chapman-Kolmogorov prediction `eta(theta) = sum_prev T(theta | prev) mu(prev)`,
/// carried out in the log domain.
pub fn centralized_evolve<S: Scalar>(prior: &Belief<S>, transition: &TransitionModel<S>) -> Result<Belief<S>> {
    let h = transition.num_hypotheses();
    check_hypotheses(prior, h)?;
    let lp = prior.log_probabilities();
    let mut terms = vec![S::zero(); h];
    let out = (0..h)
        .map(|next| {
            for (prev, t) in terms.iter_mut().enumerate() {
                *t = transition.log_prob(prev, next) + lp[prev];
            }
            log_sum_exp(&terms)
        })
        .collect();
    Ok(Belief::from_log_weights(out))
}

/// Bayes update of the time-adjusted prior with the joint likelihood of all
/// agents' observations.
pub fn centralized_adapt<S: Scalar>(eta: &Belief<S>, loglik: &LogLikelihoods<S>) -> Result<Belief<S>> {
    check_hypotheses(eta, loglik.num_hypotheses())?;
    let joint = loglik.joint();
    Ok(Belief::from_log_weights(
        joint.iter().zip(eta.log_probabilities()).map(|(l, e)| *l + *e).collect(),
    ))
}

/// One step of the optimal centralized filter; returns `(posterior, eta)`.
pub fn centralized_step<S: Scalar, L: Likelihood<S>>(
    prior: &Belief<S>,
    observations: &[L::Observation],
    transition: &TransitionModel<S>,
    likelihoods: &[L],
) -> Result<(Belief<S>, Belief<S>)> {
    let loglik = LogLikelihoods::evaluate(likelihoods, observations)?;
    let eta = centralized_evolve(prior, transition)?;
    let mu = centralized_adapt(&eta, &loglik)?;
    Ok((mu, eta))
}

/// Evolve stage applied agent-wise.
pub fn diffusion_evolve<S: Scalar>(beliefs: &[Belief<S>], transition: &TransitionModel<S>) -> Result<Vec<Belief<S>>> {
    beliefs.iter().map(|b| centralized_evolve(b, transition)).collect()
}

/// Adapt stage: `log psi_k = gamma log L_k + log eta_k`, normalized per agent.
pub fn diffusion_adapt<S: Scalar>(etas: &[Belief<S>], loglik: &LogLikelihoods<S>, gamma: S) -> Result<Vec<Belief<S>>> {
    if !(gamma > S::zero()) {
        return Err(Error::InvalidGamma(gamma.as_f64()));
    }
    if etas.len() != loglik.num_agents() {
        return Err(Error::Shape(format!("{} beliefs for {} agents", etas.len(), loglik.num_agents())));
    }
    etas.iter()
        .enumerate()
        .map(|(k, eta)| {
            check_hypotheses(eta, loglik.num_hypotheses())?;
            Ok(Belief::from_log_weights(
                loglik
                    .agent(k)
                    .iter()
                    .zip(eta.log_probabilities())
                    .map(|(l, e)| gamma * *l + *e)
                    .collect(),
            ))
        })
        .collect()
}

/// Combine stage: geometric pooling `log mu_k = sum_l a_{lk} log psi_l`,
/// normalized with log-sum-exp.
pub fn diffusion_combine<S: Scalar>(psis: &[Belief<S>], combination: &CombinationMatrix<S>) -> Result<Vec<Belief<S>>> {
    if psis.len() != combination.num_agents() {
        return Err(Error::Shape(format!(
            "{} beliefs for a {}-agent combination matrix",
            psis.len(),
            combination.num_agents()
        )));
    }
    let h = psis.first().map_or(0, Belief::num_hypotheses);
    if psis.iter().any(|p| p.num_hypotheses() != h) {
        return Err(Error::Shape("agents hold beliefs of different sizes".into()));
    }
    Ok((0..psis.len())
        .map(|k| {
            let mut acc = vec![S::zero(); h];
            for &(l, a) in combination.neighborhood(k) {
                for (slot, lp) in acc.iter_mut().zip(psis[l].log_probabilities()) {
                    *slot += a * *lp;
                }
            }
            Belief::from_log_weights(acc)
        })
        .collect())
}

/// Parameters of the diffusion HMM strategy.
#[derive(Debug, Clone, Copy)]
pub struct DiffusionConfig<'a, S, L> {
    pub gamma: S,
    pub combination: &'a CombinationMatrix<S>,
    pub transition: &'a TransitionModel<S>,
    pub likelihoods: &'a [L],
}

impl<'a, S: Scalar, L: Likelihood<S>> DiffusionConfig<'a, S, L> {
    pub fn new(
        gamma: S,
        combination: &'a CombinationMatrix<S>,
        transition: &'a TransitionModel<S>,
        likelihoods: &'a [L],
    ) -> Result<Self> {
        if !(gamma > S::zero()) || !gamma.is_finite() {
            return Err(Error::InvalidGamma(gamma.as_f64()));
        }
        check_network(combination, likelihoods, Some(transition))?;
        Ok(Self {
            gamma,
            combination,
            transition,
            likelihoods,
        })
    }
}

/// Parameters of the adaptive social learning baseline.
#[derive(Debug, Clone, Copy)]
pub struct AslConfig<'a, S, L> {
    pub delta: S,
    pub combination: &'a CombinationMatrix<S>,
    pub likelihoods: &'a [L],
}

impl<'a, S: Scalar, L: Likelihood<S>> AslConfig<'a, S, L> {
    pub fn new(delta: S, combination: &'a CombinationMatrix<S>, likelihoods: &'a [L]) -> Result<Self> {
        if !(delta > S::zero() && delta < S::one()) {
            return Err(Error::InvalidAslStep(delta.as_f64()));
        }
        check_network(combination, likelihoods, None)?;
        Ok(Self {
            delta,
            combination,
            likelihoods,
        })
    }
}

pub(crate) fn check_network<S: Scalar, L: Likelihood<S>>(
    combination: &CombinationMatrix<S>,
    likelihoods: &[L],
    transition: Option<&TransitionModel<S>>,
) -> Result<()> {
    if combination.num_agents() != likelihoods.len() {
        return Err(Error::Shape(format!(
            "combination matrix has {} agents but {} likelihood models were given",
            combination.num_agents(),
            likelihoods.len()
        )));
    }
    if let Some(t) = transition {
        if let Some(l) = likelihoods.iter().find(|l| l.num_hypotheses() != t.num_hypotheses()) {
            return Err(Error::Shape(format!(
                "likelihood over {} hypotheses, transition over {}",
                l.num_hypotheses(),
                t.num_hypotheses()
            )));
        }
    }
    Ok(())
}

/// Per-agent beliefs at a time index.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkBeliefState<S> {
    pub time: usize,
    pub beliefs: Vec<Belief<S>>,
}

impl<S: Scalar> NetworkBeliefState<S> {
    pub fn new(beliefs: Vec<Belief<S>>) -> Self {
        Self { time: 0, beliefs }
    }

    pub fn uniform(num_agents: usize, num_hypotheses: usize) -> Self {
        Self::new(vec![Belief::uniform(num_hypotheses); num_agents])
    }
}

/// Evolve, adapt and combine. Also returns the agents' time-adjusted priors.
pub fn diffusion_step<S: Scalar, L: Likelihood<S>>(
    state: &NetworkBeliefState<S>,
    observations: &[L::Observation],
    config: &DiffusionConfig<'_, S, L>,
) -> Result<(NetworkBeliefState<S>, Vec<Belief<S>>)> {
    let loglik = LogLikelihoods::evaluate(config.likelihoods, observations)?;
    diffusion_step_with(state, &loglik, config.gamma, config.transition, config.combination)
}

pub(crate) fn diffusion_step_with<S: Scalar>(
    state: &NetworkBeliefState<S>,
    loglik: &LogLikelihoods<S>,
    gamma: S,
    transition: &TransitionModel<S>,
    combination: &CombinationMatrix<S>,
) -> Result<(NetworkBeliefState<S>, Vec<Belief<S>>)> {
    let etas = diffusion_evolve(&state.beliefs, transition)?;
    let psis = diffusion_adapt(&etas, loglik, gamma)?;
    let beliefs = diffusion_combine(&psis, combination)?;
    Ok((
        NetworkBeliefState {
            time: state.time + 1,
            beliefs,
        },
        etas,
    ))
}

/// Adaptive social learning: `log psi_k = (1 - delta) log mu_k + delta log L_k`
/// followed by the same geometric combine. No prediction stage.
pub fn asl_step<S: Scalar, L: Likelihood<S>>(
    state: &NetworkBeliefState<S>,
    observations: &[L::Observation],
    config: &AslConfig<'_, S, L>,
) -> Result<NetworkBeliefState<S>> {
    let loglik = LogLikelihoods::evaluate(config.likelihoods, observations)?;
    asl_step_with(state, &loglik, config.delta, config.combination)
}

pub(crate) fn asl_step_with<S: Scalar>(
    state: &NetworkBeliefState<S>,
    loglik: &LogLikelihoods<S>,
    delta: S,
    combination: &CombinationMatrix<S>,
) -> Result<NetworkBeliefState<S>> {
    if state.beliefs.len() != loglik.num_agents() {
        return Err(Error::Shape(format!(
            "{} beliefs for {} agents",
            state.beliefs.len(),
            loglik.num_agents()
        )));
    }
    let keep = S::one() - delta;
    let psis: Vec<Belief<S>> = state
        .beliefs
        .iter()
        .enumerate()
        .map(|(k, mu)| {
            check_hypotheses(mu, loglik.num_hypotheses())?;
            Ok(Belief::from_log_weights(
                mu.log_probabilities()
                    .iter()
                    .zip(loglik.agent(k))
                    .map(|(m, l)| keep * *m + delta * *l)
                    .collect(),
            ))
        })
        .collect::<Result<_>>()?;
    Ok(NetworkBeliefState {
        time: state.time + 1,
        beliefs: diffusion_combine(&psis, combination)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{DiscreteLikelihood, TruncatedGaussian};

    fn close(a: &Belief<f64>, b: &[f64], tol: f64) -> bool {
        a.probabilities().iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn evolve_examples() {
        let b = Belief::from_probabilities(&[0.3, 0.7]).unwrap();
        let id = TransitionModel::identity(2).unwrap();
        assert!(close(&centralized_evolve(&b, &id).unwrap(), &[0.3, 0.7], 1e-15));
        let flat = TransitionModel::binary_symmetric(0.5).unwrap();
        assert!(close(&centralized_evolve(&b, &flat).unwrap(), &[0.5, 0.5], 1e-15));
        let bsc = TransitionModel::binary_symmetric(0.1).unwrap();
        let point = Belief::point_mass(2, 0);
        assert!(close(&centralized_evolve(&point, &bsc).unwrap(), &[0.9, 0.1], 1e-15));
    }

    #[test]
    fn uninformative_data_leaves_prior() {
        let eta = Belief::from_probabilities(&[0.2, 0.8]).unwrap();
        let ll = LogLikelihoods::from_rows(vec![vec![-1.3, -1.3], vec![0.4, 0.4]]).unwrap();
        assert!(close(&centralized_adapt(&eta, &ll).unwrap(), &[0.2, 0.8], 1e-15));
    }

    #[test]
    fn single_agent_bayes() {
        let eta = Belief::from_probabilities(&[0.5, 0.5]).unwrap();
        let ll = LogLikelihoods::from_rows(vec![vec![0.2f64.ln(), 0.6f64.ln()]]).unwrap();
        assert!(close(&centralized_adapt(&eta, &ll).unwrap(), &[0.25, 0.75], 1e-15));
    }

    #[test]
    fn adapt_gamma_two_is_double_update() {
        let etas = vec![Belief::from_probabilities(&[0.3, 0.5, 0.2]).unwrap()];
        let ll = LogLikelihoods::from_rows(vec![vec![-0.2, -1.1, -0.7]]).unwrap();
        let twice = diffusion_adapt(&diffusion_adapt(&etas, &ll, 1.0).unwrap(), &ll, 1.0).unwrap();
        let once = diffusion_adapt(&etas, &ll, 2.0).unwrap();
        assert!(close(&once[0], &twice[0].probabilities(), 1e-14));
        let tiny = diffusion_adapt(&etas, &ll, 1e-300).unwrap();
        assert!(close(&tiny[0], &etas[0].probabilities(), 1e-15));
        assert!(matches!(diffusion_adapt(&etas, &ll, 0.0), Err(Error::InvalidGamma(_))));
    }

    #[test]
    fn combine_with_uniform_matrix_is_geometric_mean() {
        let psis = vec![
            Belief::from_probabilities(&[0.9, 0.1]).unwrap(),
            Belief::from_probabilities(&[0.4, 0.6]).unwrap(),
            Belief::from_probabilities(&[0.2, 0.8]).unwrap(),
        ];
        let a = CombinationMatrix::uniform(3);
        let out = diffusion_combine(&psis, &a).unwrap();
        let g0 = (0.9f64 * 0.4 * 0.2).cbrt();
        let g1 = (0.1f64 * 0.6 * 0.8).cbrt();
        for b in &out {
            assert!(close(b, &[g0 / (g0 + g1), g1 / (g0 + g1)], 1e-14));
        }
    }

    #[test]
    fn combine_identity_and_identical_inputs() {
        let psis = vec![
            Belief::from_probabilities(&[0.9, 0.1]).unwrap(),
            Belief::from_probabilities(&[0.4, 0.6]).unwrap(),
        ];
        let id = CombinationMatrix::<f64>::identity(1).unwrap();
        assert_eq!(diffusion_combine(&psis[..1], &id).unwrap()[0], psis[0]);
        let a = CombinationMatrix::from_dense(2, vec![0.7, 0.3, 0.3, 0.7]).unwrap();
        let same = vec![psis[1].clone(); 2];
        for b in diffusion_combine(&same, &a).unwrap() {
            assert!(close(&b, &[0.4, 0.6], 1e-15));
        }
        assert!(diffusion_combine(&psis, &id).is_err());
    }

    #[test]
    fn diffusion_single_agent_equals_centralized() {
        let t = TransitionModel::binary_symmetric(0.2).unwrap();
        let l = vec![TruncatedGaussian::benchmark()];
        let a = CombinationMatrix::identity(1).unwrap();
        let cfg = DiffusionConfig::new(1.0, &a, &t, &l).unwrap();
        let mut state = NetworkBeliefState::uniform(1, 2);
        let mut central = Belief::uniform(2);
        for xi in [0.3, 1.7, -0.9, 2.0, 1.1] {
            let (next, etas) = diffusion_step(&state, &[xi], &cfg).unwrap();
            let (mu, eta) = centralized_step(&central, &[xi], &t, &l).unwrap();
            assert!(close(&next.beliefs[0], &mu.probabilities(), 1e-14));
            assert!(close(&etas[0], &eta.probabilities(), 1e-14));
            state = next;
            central = mu;
        }
        assert_eq!(state.time, 5);
    }

    #[test]
    fn asl_two_step_scalar_recursion() {
        // identity A, delta = 0.5, 2 hypotheses: the log-ratio
        // r = log mu(0)/mu(1) follows r' = (1 - d) r + d (l0 - l1).
        let d = DiscreteLikelihood::new(vec![vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap();
        let l = vec![d];
        let a = CombinationMatrix::identity(1).unwrap();
        let cfg = AslConfig::new(0.5, &a, &l).unwrap();
        let prior = Belief::from_probabilities(&[0.6, 0.4]).unwrap();
        let mut state = NetworkBeliefState::new(vec![prior]);
        let mut r = (0.6f64 / 0.4).ln();
        for obs in [0usize, 1] {
            state = asl_step(&state, &[obs], &cfg).unwrap();
            let lr = if obs == 0 { (0.7f64 / 0.2).ln() } else { (0.3f64 / 0.8).ln() };
            r = 0.5 * r + 0.5 * lr;
        }
        let p0 = 1.0 / (1.0 + (-r).exp());
        assert!((state.beliefs[0].prob(0) - p0).abs() < 1e-14);
    }

    #[test]
    fn asl_rejects_bad_step() {
        let l = vec![TruncatedGaussian::<f64>::benchmark()];
        let a = CombinationMatrix::identity(1).unwrap();
        assert!(AslConfig::new(0.0, &a, &l).is_err());
        assert!(AslConfig::new(1.0, &a, &l).is_err());
    }

    #[test]
    fn config_checks_agent_count() {
        let t = TransitionModel::binary_symmetric(0.2).unwrap();
        let l = vec![TruncatedGaussian::benchmark(); 3];
        let a = CombinationMatrix::uniform(2);
        assert!(DiffusionConfig::new(1.0, &a, &t, &l).is_err());
        let l3 = vec![TruncatedGaussian::new(vec![0.0, 1.0, 2.0], 1.0, -1.0, 2.0).unwrap(); 2];
        assert!(DiffusionConfig::new(1.0, &a, &t, &l3).is_err());
    }

    #[test]
    fn off_support_observation_propagates() {
        let t = TransitionModel::binary_symmetric(0.2).unwrap();
        let l = vec![TruncatedGaussian::benchmark()];
        assert!(matches!(
            centralized_step(&Belief::uniform(2), &[3.0], &t, &l),
            Err(Error::OffSupport { .. })
        ));
    }
}

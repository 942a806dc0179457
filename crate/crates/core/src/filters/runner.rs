use crate::error::{Error, Result};
use crate::filters::steps::{asl_step_with, centralized_adapt, centralized_evolve, check_network, diffusion_step_with};
use crate::filters::{Belief, LogLikelihoods, NetworkBeliefState};
use crate::graph::CombinationMatrix;
use crate::models::{Likelihood, StateTrajectory, TransitionModel};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrategyKind<S> {
    /// Diffusion HMM filter with likelihood exponent `gamma`.
    Diffusion { gamma: S },
    /// Adaptive social learning with discount `delta`.
    Asl { delta: S },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategySpec<S> {
    pub name: String,
    pub kind: StrategyKind<S>,
}

impl<S: Scalar> StrategySpec<S> {
    pub fn diffusion(name: impl Into<String>, gamma: S) -> Self {
        Self {
            name: name.into(),
            kind: StrategyKind::Diffusion { gamma },
        }
    }

    pub fn asl(name: impl Into<String>, delta: S) -> Self {
        Self {
            name: name.into(),
            kind: StrategyKind::Asl { delta },
        }
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            StrategyKind::Diffusion { gamma } if !(gamma > S::zero()) || !gamma.is_finite() => {
                Err(Error::InvalidGamma(gamma.as_f64()))
            }
            StrategyKind::Asl { delta } if !(delta > S::zero() && delta < S::one()) => {
                Err(Error::InvalidAslStep(delta.as_f64()))
            }
            _ => Ok(()),
        }
    }
}

/// Initial beliefs of the centralized filter and of every agent.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialBeliefs<S> {
    pub centralized: Belief<S>,
    pub agents: Vec<Belief<S>>,
}

impl<S: Scalar> InitialBeliefs<S> {
    /// The same prior everywhere.
    pub fn shared(prior: Belief<S>, num_agents: usize) -> Self {
        Self {
            agents: vec![prior.clone(); num_agents],
            centralized: prior,
        }
    }

    pub fn uniform(num_agents: usize, num_hypotheses: usize) -> Self {
        Self::shared(Belief::uniform(num_hypotheses), num_agents)
    }
}

/// The centralized filter and a set of distributed strategies stepped on a
/// common observation stream.
#[derive(Debug, Clone)]
pub struct FilterBank<'a, S, L> {
    transition: &'a TransitionModel<S>,
    likelihoods: &'a [L],
    combination: &'a CombinationMatrix<S>,
    strategies: Vec<StrategySpec<S>>,
    time: usize,
    centralized: Belief<S>,
    centralized_eta: Option<Belief<S>>,
    states: Vec<NetworkBeliefState<S>>,
    etas: Vec<Option<Vec<Belief<S>>>>,
}

impl<'a, S: Scalar, L: Likelihood<S>> FilterBank<'a, S, L> {
    pub fn new(
        transition: &'a TransitionModel<S>,
        likelihoods: &'a [L],
        combination: &'a CombinationMatrix<S>,
        strategies: Vec<StrategySpec<S>>,
        initial: &InitialBeliefs<S>,
    ) -> Result<Self> {
        check_network(combination, likelihoods, Some(transition))?;
        for s in &strategies {
            s.validate()?;
        }
        let h = transition.num_hypotheses();
        if initial.agents.len() != likelihoods.len() {
            return Err(Error::Shape(format!(
                "{} initial beliefs for {} agents",
                initial.agents.len(),
                likelihoods.len()
            )));
        }
        for b in std::iter::once(&initial.centralized).chain(&initial.agents) {
            if b.num_hypotheses() != h {
                return Err(Error::Shape(format!("initial belief over {} hypotheses, expected {h}", b.num_hypotheses())));
            }
            b.check_positive()?;
        }
        let states = strategies
            .iter()
            .map(|_| NetworkBeliefState::new(initial.agents.clone()))
            .collect();
        let etas = strategies.iter().map(|_| None).collect();
        Ok(Self {
            transition,
            likelihoods,
            combination,
            strategies,
            time: 0,
            centralized: initial.centralized.clone(),
            centralized_eta: None,
            states,
            etas,
        })
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn strategies(&self) -> &[StrategySpec<S>] {
        &self.strategies
    }

    pub fn step(&mut self, observations: &[L::Observation]) -> Result<()> {
        let loglik = LogLikelihoods::evaluate(self.likelihoods, observations)?;
        self.step_log_likelihoods(&loglik)
    }

    /// Advances every filter with precomputed log-likelihoods.
    pub fn step_log_likelihoods(&mut self, loglik: &LogLikelihoods<S>) -> Result<()> {
        let eta = centralized_evolve(&self.centralized, self.transition)?;
        self.centralized = centralized_adapt(&eta, loglik)?;
        self.centralized_eta = Some(eta);
        for (j, spec) in self.strategies.iter().enumerate() {
            match spec.kind {
                StrategyKind::Diffusion { gamma } => {
                    let (next, etas) =
                        diffusion_step_with(&self.states[j], loglik, gamma, self.transition, self.combination)?;
                    self.states[j] = next;
                    self.etas[j] = Some(etas);
                }
                StrategyKind::Asl { delta } => {
                    self.states[j] = asl_step_with(&self.states[j], loglik, delta, self.combination)?;
                }
            }
        }
        self.time += 1;
        Ok(())
    }

    pub fn centralized(&self) -> &Belief<S> {
        &self.centralized
    }

    /// Centralized time-adjusted prior of the latest step.
    pub fn centralized_eta(&self) -> Option<&Belief<S>> {
        self.centralized_eta.as_ref()
    }

    pub fn beliefs(&self, strategy: usize) -> &[Belief<S>] {
        &self.states[strategy].beliefs
    }

    /// Agents' time-adjusted priors of the latest step; `None` for
    /// strategies without a prediction stage.
    pub fn etas(&self, strategy: usize) -> Option<&[Belief<S>]> {
        self.etas[strategy].as_deref()
    }
}

/// Belief trajectory of one distributed strategy. `beliefs[t][k]` for
/// `t = 0..=N`; `etas[t - 1][k]` for `t = 1..=N` when defined.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyHistory<S> {
    pub spec: StrategySpec<S>,
    pub beliefs: Vec<Vec<Belief<S>>>,
    pub etas: Option<Vec<Vec<Belief<S>>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedHistory<S> {
    pub beliefs: Vec<Belief<S>>,
    pub etas: Vec<Belief<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterHistories<S> {
    pub centralized: CentralizedHistory<S>,
    pub strategies: Vec<StrategyHistory<S>>,
}

impl<S: Scalar> FilterHistories<S> {
    pub fn horizon(&self) -> usize {
        self.centralized.beliefs.len() - 1
    }

    pub fn strategy(&self, name: &str) -> Option<&StrategyHistory<S>> {
        self.strategies.iter().find(|s| s.spec.name == name)
    }
}

/// Runs the centralized filter and every strategy over the same
/// observations, recording full histories.
pub fn run_filters<S: Scalar, L: Likelihood<S>>(
    trajectory: &StateTrajectory,
    observations: &[Vec<L::Observation>],
    transition: &TransitionModel<S>,
    likelihoods: &[L],
    combination: &CombinationMatrix<S>,
    strategies: Vec<StrategySpec<S>>,
    initial: &InitialBeliefs<S>,
) -> Result<FilterHistories<S>> {
    if trajectory.len() != observations.len() {
        return Err(Error::Shape(format!(
            "{} states but {} observation rows",
            trajectory.len(),
            observations.len()
        )));
    }
    let mut bank = FilterBank::new(transition, likelihoods, combination, strategies, initial)?;
    let n = observations.len();
    let mut centralized = CentralizedHistory {
        beliefs: Vec::with_capacity(n + 1),
        etas: Vec::with_capacity(n),
    };
    centralized.beliefs.push(bank.centralized().clone());
    let mut histories: Vec<StrategyHistory<S>> = bank
        .strategies()
        .iter()
        .enumerate()
        .map(|(j, spec)| StrategyHistory {
            spec: spec.clone(),
            beliefs: vec![bank.beliefs(j).to_vec()],
            etas: match spec.kind {
                StrategyKind::Diffusion { .. } => Some(Vec::with_capacity(n)),
                StrategyKind::Asl { .. } => None,
            },
        })
        .collect();
    for row in observations {
        bank.step(row)?;
        centralized.beliefs.push(bank.centralized().clone());
        centralized.etas.push(bank.centralized_eta().expect("set by step").clone());
        for (j, h) in histories.iter_mut().enumerate() {
            h.beliefs.push(bank.beliefs(j).to_vec());
            if let (Some(store), Some(etas)) = (h.etas.as_mut(), bank.etas(j)) {
                store.push(etas.to_vec());
            }
        }
    }
    Ok(FilterHistories {
        centralized,
        strategies: histories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{metropolis_weights, Topology};
    use crate::models::TruncatedGaussian;

    fn setup() -> (TransitionModel<f64>, Vec<TruncatedGaussian<f64>>, CombinationMatrix<f64>) {
        (
            TransitionModel::binary_symmetric(0.1).unwrap(),
            vec![TruncatedGaussian::benchmark(); 3],
            metropolis_weights(&Topology::path(3)).unwrap(),
        )
    }

    #[test]
    fn empty_horizon_keeps_initial_beliefs() {
        let (t, l, a) = setup();
        let traj = StateTrajectory::new(vec![], 2).unwrap();
        let h = run_filters(
            &traj,
            &[],
            &t,
            &l,
            &a,
            vec![StrategySpec::diffusion("d", 3.0), StrategySpec::asl("a", 0.1)],
            &InitialBeliefs::uniform(3, 2),
        )
        .unwrap();
        assert_eq!(h.horizon(), 0);
        assert_eq!(h.strategies[0].beliefs.len(), 1);
        assert_eq!(h.strategies[0].etas.as_ref().unwrap().len(), 0);
        assert!(h.strategies[1].etas.is_none());
    }

    #[test]
    fn zero_prior_rejected() {
        let (t, l, a) = setup();
        let bad = Belief::from_probabilities(&[1.0, 0.0]).unwrap();
        let init = InitialBeliefs::shared(bad, 3);
        let err = FilterBank::new(&t, &l, &a, vec![], &init).unwrap_err();
        assert!(matches!(err, Error::NonPositivePrior { index: 1, .. }));
    }

    #[test]
    fn invalid_strategy_parameters_rejected() {
        let (t, l, a) = setup();
        let init = InitialBeliefs::uniform(3, 2);
        assert!(FilterBank::new(&t, &l, &a, vec![StrategySpec::diffusion("d", 0.0)], &init).is_err());
        assert!(FilterBank::new(&t, &l, &a, vec![StrategySpec::asl("a", 1.0)], &init).is_err());
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let (t, l, a) = setup();
        let traj = StateTrajectory::new(vec![0, 1], 2).unwrap();
        let obs = vec![vec![0.0; 3]];
        assert!(run_filters(&traj, &obs, &t, &l, &a, vec![], &InitialBeliefs::uniform(3, 2)).is_err());
    }

    #[test]
    fn strategies_do_not_interact() {
        let (t, l, a) = setup();
        let traj = StateTrajectory::new(vec![0, 0, 1, 1], 2).unwrap();
        let obs = vec![vec![0.1, 0.9, 1.4], vec![-0.5, 0.2, 1.0], vec![1.9, 1.5, 0.7], vec![2.0, 1.2, 1.8]];
        let init = InitialBeliefs::uniform(3, 2);
        let solo = run_filters(&traj, &obs, &t, &l, &a, vec![StrategySpec::diffusion("d", 3.0)], &init).unwrap();
        let both = run_filters(
            &traj,
            &obs,
            &t,
            &l,
            &a,
            vec![StrategySpec::asl("a", 0.1), StrategySpec::diffusion("d", 3.0)],
            &init,
        )
        .unwrap();
        assert_eq!(solo.strategy("d"), both.strategy("d"));
        assert_eq!(solo.centralized, both.centralized);
    }
}

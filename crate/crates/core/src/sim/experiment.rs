use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::filters::{run_filters, FilterBank, FilterHistories, InitialBeliefs, StrategyKind, StrategySpec};
use crate::metrics::{
    bound_lambda, corollary1_check, expected_sup_log_likelihood, kl_divergence, CorollaryReport, Epsilon, Estimate,
    ReadoutWindow, RiskAccumulator, RiskTrace, RunDivergences, TheoremBound,
};
use crate::models::{sample_observations, sample_trajectory, StateTrajectory, TruncatedGaussian};
use crate::sim::config::{ExperimentConfig, Network, Scenario};
use crate::sim::rng::{stream, Purpose};

/// Runs folded into the aggregate per parallel batch.
const BATCH: usize = 64;

/// Monte Carlo knobs shared by every network of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    pub workers: usize,
    pub window: ReadoutWindow,
    /// Time of the belief-guarantee check; `None` skips it.
    pub corollary_time: Option<usize>,
    pub bound_samples: usize,
    pub epsilon_std_multiple: f64,
}

impl RunSettings {
    pub fn from_config(config: &ExperimentConfig) -> Self {
        let horizon = config.experiment.horizon;
        Self {
            horizon,
            runs: config.experiment.runs,
            seed: config.experiment.seed,
            workers: config.experiment.workers,
            window: config.window(),
            corollary_time: (horizon > 0).then(|| config.corollary_time()),
            bound_samples: config.metrics.bound_samples,
            epsilon_std_multiple: config.metrics.epsilon_std_multiple,
        }
    }
}

/// One fully recorded run, kept for plotting and replay checks.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifact {
    pub run: usize,
    pub trajectory: StateTrajectory,
    pub observations: Vec<Vec<f64>>,
    pub digest: String,
    pub histories: FilterHistories<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyOutcome {
    pub spec: StrategySpec<f64>,
    pub risks: RiskTrace<f64>,
    /// Asymptotic bounds, for diffusion strategies on ergodic chains.
    pub bound: Option<TheoremBound<f64>>,
    pub corollary: Option<CorollaryReport<f64>>,
    /// `log mu*(theta) - log mu_k(theta)` per run and agent at the check time.
    pub log_ratios: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOutcome {
    pub network: Network,
    pub strategies: Vec<StrategyOutcome>,
    pub sample: RunArtifact,
    /// Digest over every run's trajectory and observations, in run order.
    pub data_digest: String,
    /// Expected log-likelihood sup-norm used by the bounds, if evaluated.
    pub expected_linf: Option<Estimate<f64>>,
}

impl NetworkOutcome {
    pub fn strategy(&self, name: &str) -> Option<&StrategyOutcome> {
        self.strategies.iter().find(|s| s.spec.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    pub settings: RunSettings,
    pub networks: Vec<NetworkOutcome>,
}

struct RunOutput {
    digest: [u8; 32],
    divergences: Vec<RunDivergences<f64>>,
    log_ratios: Vec<Vec<f64>>,
}

/// SHA-256 over the hidden states and the raw bits of every observation.
pub fn data_digest(trajectory: &StateTrajectory, observations: &[Vec<f64>]) -> [u8; 32] {
    let mut h = Sha256::new();
    for s in trajectory.states() {
        h.update((*s as u64).to_le_bytes());
    }
    for row in observations {
        for x in row {
            h.update(x.to_bits().to_le_bytes());
        }
    }
    h.finalize().into()
}

/// Hidden states and observations of run `run`. Agent `k`'s observations
/// come from their own stream, so networks of equal size see identical data.
pub fn sample_run_data(
    scenario: &Scenario,
    num_agents: usize,
    horizon: usize,
    seed: u64,
    run: usize,
) -> Result<(StateTrajectory, Vec<Vec<f64>>)> {
    let trajectory = sample_trajectory(&scenario.transition, horizon, &mut stream(seed, run as u64, Purpose::Chain, 0));
    let likelihoods = vec![scenario.likelihood.clone(); num_agents];
    let mut rngs: Vec<_> = (0..num_agents)
        .map(|k| stream(seed, run as u64, Purpose::Observation, k as u64))
        .collect();
    let observations = sample_observations(&likelihoods, &trajectory, &mut rngs)?;
    Ok((trajectory, observations))
}

fn simulate_run(
    scenario: &Scenario,
    network: &Network,
    strategies: &[StrategySpec<f64>],
    likelihoods: &[TruncatedGaussian<f64>],
    settings: &RunSettings,
    run: usize,
) -> Result<RunOutput> {
    let k = network.num_agents();
    let n = settings.horizon;
    let (trajectory, observations) = sample_run_data(scenario, k, n, settings.seed, run)?;
    let digest = data_digest(&trajectory, &observations);
    let initial = InitialBeliefs::shared(scenario.prior.clone(), k);
    let mut bank = FilterBank::new(
        &scenario.transition,
        likelihoods,
        &network.combination,
        strategies.to_vec(),
        &initial,
    )?;
    let mut divergences: Vec<RunDivergences<f64>> = strategies
        .iter()
        .map(|s| RunDivergences {
            horizon: n,
            num_agents: k,
            posterior: Vec::with_capacity(n * k),
            prior: matches!(s.kind, StrategyKind::Diffusion { .. }).then(|| Vec::with_capacity(n * k)),
        })
        .collect();
    let mut log_ratios = vec![Vec::new(); strategies.len()];
    for (t, row) in observations.iter().enumerate() {
        bank.step(row)?;
        let central = bank.centralized();
        let central_eta = bank.centralized_eta().expect("set by step");
        for (j, div) in divergences.iter_mut().enumerate() {
            for b in bank.beliefs(j) {
                div.posterior.push(kl_divergence(central, b)?);
            }
            if let (Some(store), Some(etas)) = (div.prior.as_mut(), bank.etas(j)) {
                for e in etas {
                    store.push(kl_divergence(central_eta, e)?);
                }
            }
        }
        if settings.corollary_time == Some(t + 1) {
            let truth = trajectory.states()[t];
            for (j, slot) in log_ratios.iter_mut().enumerate() {
                *slot = bank
                    .beliefs(j)
                    .iter()
                    .map(|b| central.log_prob(truth) - b.log_prob(truth))
                    .collect();
            }
        }
    }
    Ok(RunOutput {
        digest,
        divergences,
        log_ratios,
    })
}

/// Monte Carlo evaluation of `strategies` on one network. Run `r` uses
/// streams keyed by `(seed, r)`; batches run in parallel and are folded in
/// run order, so results do not depend on the worker count.
pub fn simulate_network(
    scenario: &Scenario,
    network: &Network,
    strategies: &[StrategySpec<f64>],
    settings: &RunSettings,
) -> Result<NetworkOutcome> {
    if settings.runs == 0 {
        return Err(Error::Config(vec!["experiment.runs must be at least 1".into()]));
    }
    let k = network.num_agents();
    let n = settings.horizon;
    let likelihoods = vec![scenario.likelihood.clone(); k];
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers)
        .build()
        .map_err(|e| Error::Config(vec![format!("cannot start worker pool: {e}")]))?;

    let mut accumulators: Vec<RiskAccumulator<f64>> = strategies
        .iter()
        .map(|s| RiskAccumulator::new(n, k, matches!(s.kind, StrategyKind::Diffusion { .. }), settings.window))
        .collect();
    let mut ratios: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(settings.runs); strategies.len()];
    let mut digest = Sha256::new();

    let mut start = 0;
    while start < settings.runs {
        let end = (start + BATCH).min(settings.runs);
        let batch: Vec<Result<RunOutput>> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|r| simulate_run(scenario, network, strategies, &likelihoods, settings, r))
                .collect()
        });
        for out in batch {
            let out = out?;
            digest.update(out.digest);
            for (j, div) in out.divergences.iter().enumerate() {
                accumulators[j].add(div)?;
            }
            for (j, lr) in out.log_ratios.into_iter().enumerate() {
                if !lr.is_empty() {
                    ratios[j].push(lr);
                }
            }
        }
        start = end;
    }

    let (expected_linf, bounds) = network_bounds(scenario, network, strategies, settings)?;

    let mut outcomes = Vec::with_capacity(strategies.len());
    for (((spec, acc), log_ratios), bound) in strategies.iter().zip(accumulators).zip(ratios).zip(bounds) {
        let corollary = match &bound {
            Some(b) if !log_ratios.is_empty() => {
                match corollary1_check(&log_ratios, Epsilon::StdMultiple(settings.epsilon_std_multiple), b.posterior_bound) {
                    Ok(r) => Some(r),
                    // a degenerate log-ratio (e.g. exact centralized equivalence
                    // with zero spread) leaves epsilon at zero
                    Err(Error::UninformativeEpsilon { .. }) => None,
                    Err(e) => return Err(e),
                }
            }
            _ => None,
        };
        outcomes.push(StrategyOutcome {
            spec: spec.clone(),
            risks: acc.finish()?,
            bound,
            corollary,
            log_ratios,
        });
    }

    let sample = sample_artifact(scenario, network, strategies, settings.horizon, settings.seed, 0)?;
    Ok(NetworkOutcome {
        network: network.clone(),
        strategies: outcomes,
        sample,
        data_digest: hex::encode(digest.finalize()),
        expected_linf,
    })
}

/// Expected sup-norm estimate plus one optional bound per strategy.
pub type NetworkBounds = (Option<Estimate<f64>>, Vec<Option<TheoremBound<f64>>>);

/// Asymptotic bounds for every diffusion strategy on `network`, sharing one
/// Monte Carlo estimate of the expected log-likelihood sup-norm. Returns no
/// bounds when the chain is not geometrically ergodic.
pub fn network_bounds(
    scenario: &Scenario,
    network: &Network,
    strategies: &[StrategySpec<f64>],
    settings: &RunSettings,
) -> Result<NetworkBounds> {
    let k = network.num_agents();
    let kappa = scenario.transition.dobrushin_coefficient();
    let diffusion = |s: &StrategySpec<f64>| match s.kind {
        StrategyKind::Diffusion { gamma } => Some(gamma),
        StrategyKind::Asl { .. } => None,
    };
    if !(kappa < 1.0) || strategies.iter().all(|s| diffusion(s).is_none()) {
        return Ok((None, vec![None; strategies.len()]));
    }
    let likelihoods = vec![scenario.likelihood.clone(); k];
    let stationary = scenario.transition.stationary_distribution();
    let mut rng = stream(settings.seed, 0, Purpose::Bound, k as u64);
    let e = expected_sup_log_likelihood(&likelihoods, &stationary, settings.bound_samples, &mut rng)?;
    let bounds = strategies
        .iter()
        .map(|s| {
            diffusion(s)
                .map(|gamma| TheoremBound::from_parts(k, gamma, network.rho2, kappa, e, settings.bound_samples))
                .transpose()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((Some(e), bounds))
}

/// Regenerates run `run` and records full belief histories.
pub fn sample_artifact(
    scenario: &Scenario,
    network: &Network,
    strategies: &[StrategySpec<f64>],
    horizon: usize,
    seed: u64,
    run: usize,
) -> Result<RunArtifact> {
    let k = network.num_agents();
    let (trajectory, observations) = sample_run_data(scenario, k, horizon, seed, run)?;
    let likelihoods = vec![scenario.likelihood.clone(); k];
    let histories = run_filters(
        &trajectory,
        &observations,
        &scenario.transition,
        &likelihoods,
        &network.combination,
        strategies.to_vec(),
        &InitialBeliefs::shared(scenario.prior.clone(), k),
    )?;
    Ok(RunArtifact {
        run,
        digest: hex::encode(data_digest(&trajectory, &observations)),
        trajectory,
        observations,
        histories,
    })
}

/// Runs every configured strategy on every configured network.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let scenario = config.scenario()?;
    let settings = RunSettings::from_config(config);
    let networks = scenario
        .networks
        .iter()
        .map(|net| {
            let strategies = scenario
                .strategies
                .iter()
                .map(|(name, t)| t.instantiate(name, net.num_agents()))
                .collect::<Result<Vec<_>>>()?;
            simulate_network(&scenario, net, &strategies, &settings)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        name: config.experiment.name.clone(),
        settings,
        networks,
    })
}

/// Same as [`run_experiment`], with networks ordered by increasing mixing
/// rate. Every network shares the run seeds, so equal-size networks are
/// compared on identical data.
pub fn risk_vs_topology_sweep(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut report = run_experiment(config)?;
    report
        .networks
        .sort_by(|a, b| a.network.rho2.partial_cmp(&b.network.rho2).unwrap_or(std::cmp::Ordering::Equal));
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaPoint {
    pub gamma: f64,
    pub lambda: f64,
    pub asymptotic: Estimate<f64>,
    pub asymptotic_prior: Option<Estimate<f64>>,
    /// Time-averaged `|mu_k(theta) - mu*(theta)|` at the true state, sample run.
    pub tracking_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaSweep {
    pub network: String,
    pub rho2: f64,
    pub points: Vec<GammaPoint>,
    pub outcome: NetworkOutcome,
}

/// Strategy name used for a swept step-size.
pub fn gamma_label(gamma: f64) -> String {
    format!("gamma={gamma}")
}

/// Diffusion filters with each step-size in `gammas`, run side by side on
/// the same data for every configured network.
pub fn gamma_sweep(config: &ExperimentConfig, gammas: &[f64]) -> Result<Vec<GammaSweep>> {
    if gammas.is_empty() {
        return Err(Error::Config(vec!["sweep.gammas must list at least one step-size".into()]));
    }
    if let Some(g) = gammas.iter().find(|g| !(**g > 0.0)) {
        return Err(Error::Config(vec![format!("sweep.gammas contains {g}: the step-size must satisfy γ > 0")]));
    }
    let scenario = config.scenario()?;
    let settings = RunSettings::from_config(config);
    let strategies: Vec<StrategySpec<f64>> = gammas
        .iter()
        .map(|&g| StrategySpec::diffusion(gamma_label(g), g))
        .collect();
    scenario
        .networks
        .iter()
        .map(|net| {
            let outcome = simulate_network(&scenario, net, &strategies, &settings)?;
            let points = gammas
                .iter()
                .zip(&outcome.strategies)
                .map(|(&gamma, s)| GammaPoint {
                    gamma,
                    lambda: bound_lambda(net.num_agents(), gamma, net.rho2),
                    asymptotic: s.risks.asymptotic,
                    asymptotic_prior: s.risks.asymptotic_prior,
                    tracking_gap: tracking_gap(&outcome.sample, &s.spec.name).unwrap_or(f64::NAN),
                })
                .collect();
            Ok(GammaSweep {
                network: net.label.clone(),
                rho2: net.rho2,
                points,
                outcome,
            })
        })
        .collect()
}

/// Time- and agent-averaged `|mu_k,i(theta_i) - mu*_i(theta_i)|` of one
/// strategy over a recorded run.
pub fn tracking_gap(artifact: &RunArtifact, strategy: &str) -> Option<f64> {
    let s = artifact.histories.strategy(strategy)?;
    let states = artifact.trajectory.states();
    if states.is_empty() {
        return Some(0.0);
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, &truth) in states.iter().enumerate() {
        let c = artifact.histories.centralized.beliefs[i + 1].prob(truth);
        for b in &s.beliefs[i + 1] {
            total += (b.prob(truth) - c).abs();
            count += 1;
        }
    }
    Some(total / count as f64)
}

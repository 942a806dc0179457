//! Divergences, Monte Carlo risk estimation against the centralized filter,
//! the asymptotic risk bounds and the belief guarantee at the true state.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::filters::{Belief, CentralizedHistory, StrategyHistory};
use crate::graph::{second_eigenvalue_magnitude, CombinationMatrix};
use crate::models::{Likelihood, StateTrajectory, TransitionModel};
use crate::scalar::Scalar;

pub use crate::models::total_variation;

/// `D_KL(p || q) = sum_theta p log(p / q)`, with `0 log 0 = 0`.
///
/// Tiny negative values produced by rounding are clamped to zero.
pub fn kl_divergence<S: Scalar>(p: &Belief<S>, q: &Belief<S>) -> Result<S> {
    if p.num_hypotheses() != q.num_hypotheses() {
        return Err(Error::Shape("KL divergence between beliefs of different sizes".into()));
    }
    let mut acc = S::zero();
    for (theta, (lp, lq)) in p.log_probabilities().iter().zip(q.log_probabilities()).enumerate() {
        if *lp == S::neg_infinity() {
            continue;
        }
        if *lq == S::neg_infinity() {
            return Err(Error::InfiniteDivergence(theta));
        }
        acc += lp.exp() * (*lp - *lq);
    }
    Ok(acc.max(S::zero()))
}

/// Time indices `start..=horizon` over which asymptotic risks are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadoutWindow {
    pub start: usize,
}

impl ReadoutWindow {
    /// The final 20% of the horizon (at least one step).
    pub fn tail_fifth(horizon: usize) -> Self {
        Self {
            start: (horizon - horizon / 5 + 1).min(horizon.max(1)),
        }
    }

    fn range(&self, horizon: usize) -> std::ops::RangeInclusive<usize> {
        self.start.max(1)..=horizon
    }

    fn len(&self, horizon: usize) -> usize {
        self.range(horizon).count()
    }
}

/// Divergences of one Monte Carlo run, row-major `[t - 1][k]` for `t = 1..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunDivergences<S> {
    pub horizon: usize,
    pub num_agents: usize,
    /// `D_KL(mu*_t || mu_{k,t})`.
    pub posterior: Vec<S>,
    /// `D_KL(eta*_t || eta_{k,t})`, for strategies with a prediction stage.
    pub prior: Option<Vec<S>>,
}

impl<S: Scalar> RunDivergences<S> {
    pub fn from_histories(centralized: &CentralizedHistory<S>, strategy: &StrategyHistory<S>) -> Result<Self> {
        let horizon = centralized.beliefs.len().saturating_sub(1);
        if strategy.beliefs.len() != horizon + 1 {
            return Err(Error::Shape("strategy and centralized histories differ in length".into()));
        }
        let num_agents = strategy.beliefs.first().map_or(0, Vec::len);
        let mut posterior = Vec::with_capacity(horizon * num_agents);
        for t in 1..=horizon {
            for b in &strategy.beliefs[t] {
                posterior.push(kl_divergence(&centralized.beliefs[t], b)?);
            }
        }
        let prior = match &strategy.etas {
            Some(etas) => {
                if etas.len() != horizon || centralized.etas.len() != horizon {
                    return Err(Error::Shape("prior histories differ in length".into()));
                }
                let mut v = Vec::with_capacity(horizon * num_agents);
                for (c, row) in centralized.etas.iter().zip(etas) {
                    for b in row {
                        v.push(kl_divergence(c, b)?);
                    }
                }
                Some(v)
            }
            None => None,
        };
        Ok(Self {
            horizon,
            num_agents,
            posterior,
            prior,
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Welford<S> {
    n: usize,
    mean: S,
    m2: S,
}

impl<S: Scalar> Welford<S> {
    fn push(&mut self, x: S) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / S::of_usize(self.n);
        self.m2 += d * (x - self.mean);
    }

    fn stderr(&self) -> Option<S> {
        (self.n > 1).then(|| (self.m2 / S::of_usize(self.n - 1) / S::of_usize(self.n)).sqrt())
    }
}

/// Monte Carlo mean with its standard error (undefined for a single run).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<S> {
    pub mean: S,
    pub stderr: Option<S>,
}

impl<S: Scalar> Estimate<S> {
    /// `mean + 3 stderr`, or the mean alone when the error is undefined.
    pub fn upper3(&self) -> S {
        self.mean + S::of(3.0) * self.stderr.unwrap_or(S::zero())
    }

    pub fn lower3(&self) -> S {
        self.mean - S::of(3.0) * self.stderr.unwrap_or(S::zero())
    }
}

/// Per-time, per-agent risk estimates for one strategy against the
/// centralized filter.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskTrace<S> {
    pub horizon: usize,
    pub num_agents: usize,
    pub runs: usize,
    pub window: ReadoutWindow,
    /// Posterior risk `J`, `[t - 1][k]`.
    pub posterior: Vec<Estimate<S>>,
    /// Prior risk `J~`, when the strategy has a prediction stage.
    pub prior: Option<Vec<Estimate<S>>>,
    /// Window-averaged network-average `J`.
    pub asymptotic: Estimate<S>,
    pub asymptotic_prior: Option<Estimate<S>>,
    /// Window-averaged `J` per agent.
    pub asymptotic_per_agent: Vec<Estimate<S>>,
    pub asymptotic_prior_per_agent: Option<Vec<Estimate<S>>>,
}

impl<S: Scalar> RiskTrace<S> {
    pub fn posterior_at(&self, time: usize, agent: usize) -> Estimate<S> {
        self.posterior[(time - 1) * self.num_agents + agent]
    }

    pub fn prior_at(&self, time: usize, agent: usize) -> Option<Estimate<S>> {
        self.prior.as_ref().map(|p| p[(time - 1) * self.num_agents + agent])
    }

    /// Network-average posterior risk at each time `1..=N`.
    pub fn network_average(&self) -> Vec<S> {
        let k = S::of_usize(self.num_agents);
        self.posterior
            .chunks(self.num_agents)
            .map(|row| row.iter().map(|e| e.mean).sum::<S>() / k)
            .collect()
    }

    /// CSV with header `time,agent,J_mean,J_stderr,Jtilde_mean,Jtilde_stderr`.
    /// Undefined entries are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,agent,J_mean,J_stderr,Jtilde_mean,Jtilde_stderr\n");
        self.write_csv_rows(&mut out, "");
        out
    }

    /// Appends rows prefixed by `prefix` (which must end in a comma if non-empty).
    pub fn write_csv_rows(&self, out: &mut String, prefix: &str) {
        for t in 1..=self.horizon {
            for k in 0..self.num_agents {
                let j = self.posterior_at(t, k);
                let jt = self.prior_at(t, k);
                let _ = writeln!(
                    out,
                    "{prefix}{t},{k},{},{},{},{}",
                    fmt_scalar(j.mean),
                    opt(j.stderr),
                    opt(jt.map(|e| e.mean)),
                    opt(jt.and_then(|e| e.stderr)),
                );
            }
        }
    }
}

/// Formats with 17 significant digits, enough to round-trip an `f64`.
pub fn fmt_scalar<S: Scalar>(v: S) -> String {
    format!("{:.16e}", v.as_f64())
}

fn opt<S: Scalar>(v: Option<S>) -> String {
    v.map(fmt_scalar).unwrap_or_default()
}

/// Streaming accumulator behind [`estimate_risks`]. Runs are folded in the
/// order they are added.
#[derive(Debug, Clone)]
pub struct RiskAccumulator<S> {
    horizon: usize,
    num_agents: usize,
    window: ReadoutWindow,
    with_prior: bool,
    posterior: Vec<Welford<S>>,
    prior: Vec<Welford<S>>,
    asymptotic: Welford<S>,
    asymptotic_prior: Welford<S>,
    per_agent: Vec<Welford<S>>,
    per_agent_prior: Vec<Welford<S>>,
}

impl<S: Scalar> RiskAccumulator<S> {
    pub fn new(horizon: usize, num_agents: usize, with_prior: bool, window: ReadoutWindow) -> Self {
        let cells = horizon * num_agents;
        Self {
            horizon,
            num_agents,
            window,
            with_prior,
            posterior: vec![Welford::default(); cells],
            prior: vec![Welford::default(); if with_prior { cells } else { 0 }],
            asymptotic: Welford::default(),
            asymptotic_prior: Welford::default(),
            per_agent: vec![Welford::default(); num_agents],
            per_agent_prior: vec![Welford::default(); if with_prior { num_agents } else { 0 }],
        }
    }

    pub fn runs(&self) -> usize {
        self.asymptotic.n
    }

    pub fn add(&mut self, run: &RunDivergences<S>) -> Result<()> {
        if run.horizon != self.horizon || run.num_agents != self.num_agents {
            return Err(Error::Shape(format!(
                "run of shape {}x{} added to a {}x{} accumulator",
                run.horizon, run.num_agents, self.horizon, self.num_agents
            )));
        }
        if run.prior.is_some() != self.with_prior {
            return Err(Error::Shape("run prior divergences do not match the accumulator".into()));
        }
        fold(
            &mut self.posterior,
            &mut self.asymptotic,
            &mut self.per_agent,
            &run.posterior,
            self.num_agents,
            self.horizon,
            self.window,
        );
        if let Some(prior) = &run.prior {
            fold(
                &mut self.prior,
                &mut self.asymptotic_prior,
                &mut self.per_agent_prior,
                prior,
                self.num_agents,
                self.horizon,
                self.window,
            );
        }
        Ok(())
    }

    pub fn finish(self) -> Result<RiskTrace<S>> {
        if self.runs() == 0 {
            return Err(Error::Shape("risk estimate needs at least one run".into()));
        }
        let est = |w: &Welford<S>| Estimate {
            mean: w.mean,
            stderr: w.stderr(),
        };
        Ok(RiskTrace {
            horizon: self.horizon,
            num_agents: self.num_agents,
            runs: self.runs(),
            window: self.window,
            posterior: self.posterior.iter().map(est).collect(),
            prior: self.with_prior.then(|| self.prior.iter().map(est).collect()),
            asymptotic: est(&self.asymptotic),
            asymptotic_prior: self.with_prior.then(|| est(&self.asymptotic_prior)),
            asymptotic_per_agent: self.per_agent.iter().map(est).collect(),
            asymptotic_prior_per_agent: self.with_prior.then(|| self.per_agent_prior.iter().map(est).collect()),
        })
    }
}

fn fold<S: Scalar>(
    cells: &mut [Welford<S>],
    network: &mut Welford<S>,
    agents: &mut [Welford<S>],
    values: &[S],
    num_agents: usize,
    horizon: usize,
    window: ReadoutWindow,
) {
    for (cell, v) in cells.iter_mut().zip(values) {
        cell.push(*v);
    }
    let len = window.len(horizon);
    if len == 0 || num_agents == 0 {
        network.push(S::zero());
        for a in agents.iter_mut() {
            a.push(S::zero());
        }
        return;
    }
    let mut per_agent = vec![S::zero(); num_agents];
    for t in window.range(horizon) {
        for (k, slot) in per_agent.iter_mut().enumerate() {
            *slot += values[(t - 1) * num_agents + k];
        }
    }
    let denom = S::of_usize(len);
    for (a, s) in agents.iter_mut().zip(&per_agent) {
        a.push(*s / denom);
    }
    network.push(per_agent.iter().copied().sum::<S>() / (denom * S::of_usize(num_agents)));
}

/// Monte Carlo risk estimates from the divergences of independent runs.
pub fn estimate_risks<S: Scalar>(runs: &[RunDivergences<S>], window: ReadoutWindow) -> Result<RiskTrace<S>> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Shape("risk estimate needs at least one run".into()))?;
    let mut acc = RiskAccumulator::new(first.horizon, first.num_agents, first.prior.is_some(), window);
    for r in runs {
        acc.add(r)?;
    }
    acc.finish()
}

/// Convenience wrapper over paired histories of the same strategy.
pub fn estimate_risks_from_histories<S: Scalar>(
    runs: &[(&CentralizedHistory<S>, &StrategyHistory<S>)],
    window: ReadoutWindow,
) -> Result<RiskTrace<S>> {
    let divs = runs
        .iter()
        .map(|(c, s)| RunDivergences::from_histories(c, s))
        .collect::<Result<Vec<_>>>()?;
    estimate_risks(&divs, window)
}

/// `lambda = max(|1 - K / gamma|, rho2)`.
pub fn bound_lambda<S: Scalar>(num_agents: usize, gamma: S, rho2: S) -> S {
    (S::one() - S::of_usize(num_agents) / gamma).abs().max(rho2)
}

/// Evaluated right-hand sides of the asymptotic risk bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremBound<S> {
    pub num_agents: usize,
    pub gamma: S,
    pub rho2: S,
    pub lambda: S,
    pub kappa: S,
    /// Monte Carlo estimate of `E ||L_xi||_inf` under the stationary law.
    pub sup_expected_linf: S,
    pub sup_expected_linf_stderr: S,
    pub samples: usize,
    /// Bound on `limsup J`: `2 K gamma lambda E / (1 - kappa)`.
    pub posterior_bound: S,
    /// Bound on `limsup J~`: `kappa * posterior_bound`.
    pub prior_bound: S,
}

impl<S: Scalar> TheoremBound<S> {
    /// Assembles both bounds from their ingredients.
    pub fn from_parts(num_agents: usize, gamma: S, rho2: S, kappa: S, expected: Estimate<S>, samples: usize) -> Result<Self> {
        if !(kappa < S::one()) {
            return Err(Error::NotErgodic(kappa.as_f64()));
        }
        if !(gamma > S::zero()) {
            return Err(Error::InvalidGamma(gamma.as_f64()));
        }
        let lambda = bound_lambda(num_agents, gamma, rho2);
        let posterior_bound =
            S::of(2.0) * S::of_usize(num_agents) * gamma * lambda * expected.mean / (S::one() - kappa);
        Ok(Self {
            num_agents,
            gamma,
            rho2,
            lambda,
            kappa,
            sup_expected_linf: expected.mean,
            sup_expected_linf_stderr: expected.stderr.unwrap_or(S::nan()),
            samples,
            posterior_bound,
            prior_bound: kappa * posterior_bound,
        })
    }

    /// Flat `key = value` text export.
    pub fn to_key_value(&self) -> String {
        format!(
            "num_agents = {}\ngamma = {}\nrho2 = {}\nlambda = {}\nkappa = {}\nexpected_linf = {}\nexpected_linf_stderr = {}\nsamples = {}\nposterior_bound = {}\nprior_bound = {}\n",
            self.num_agents,
            fmt_scalar(self.gamma),
            fmt_scalar(self.rho2),
            fmt_scalar(self.lambda),
            fmt_scalar(self.kappa),
            fmt_scalar(self.sup_expected_linf),
            fmt_scalar(self.sup_expected_linf_stderr),
            self.samples,
            fmt_scalar(self.posterior_bound),
            fmt_scalar(self.prior_bound),
        )
    }
}

/// Monte Carlo estimate of `E ||L_xi||_inf`: draw `theta` from `stationary`,
/// one observation per agent, and take the largest `|log L_l(xi_l | theta')|`
/// over every agent `l` and every hypothesis `theta'`.
pub fn expected_sup_log_likelihood<S, L, R>(
    likelihoods: &[L],
    stationary: &[S],
    samples: usize,
    rng: &mut R,
) -> Result<Estimate<S>>
where
    S: Scalar,
    L: Likelihood<S>,
    R: Rng + ?Sized,
{
    if samples == 0 {
        return Err(Error::Shape("at least one Monte Carlo sample is required".into()));
    }
    let h = stationary.len();
    let alpha = likelihoods.iter().map(|l| l.log_bound()).fold(S::zero(), S::max);
    let mut acc = Welford::default();
    for _ in 0..samples {
        let u: f64 = rng.random();
        let mut c = 0.0;
        let mut theta = h - 1;
        for (i, p) in stationary.iter().enumerate() {
            c += p.as_f64();
            if u < c {
                theta = i;
                break;
            }
        }
        let mut sup = S::zero();
        for l in likelihoods {
            let xi = l.sample(theta, rng);
            for other in 0..h {
                let v = l.log_likelihood(&xi, other)?.abs();
                if v > sup {
                    sup = v;
                }
            }
        }
        assert!(sup <= alpha, "log-likelihood magnitude {sup} exceeds the declared bound {alpha}");
        acc.push(sup);
    }
    Ok(Estimate {
        mean: acc.mean,
        stderr: acc.stderr().or(Some(S::zero())),
    })
}

/// Evaluates the asymptotic bounds for a diffusion configuration. The
/// supremum over time collapses to a single expectation because the chain
/// is started from (and stays at) `stationary`.
pub fn theorem1_bound<S, L, R>(
    transition: &TransitionModel<S>,
    combination: &CombinationMatrix<S>,
    gamma: S,
    likelihoods: &[L],
    stationary: &[S],
    samples: usize,
    rng: &mut R,
) -> Result<TheoremBound<S>>
where
    S: Scalar,
    L: Likelihood<S>,
    R: Rng + ?Sized,
{
    let kappa = transition.dobrushin_coefficient();
    if !(kappa < S::one()) {
        return Err(Error::NotErgodic(kappa.as_f64()));
    }
    if stationary.len() != transition.num_hypotheses() {
        return Err(Error::Shape("stationary law has the wrong number of hypotheses".into()));
    }
    if combination.num_agents() != likelihoods.len() {
        return Err(Error::Shape("combination matrix and likelihoods disagree on K".into()));
    }
    let rho2 = second_eigenvalue_magnitude(combination);
    let expected = expected_sup_log_likelihood(likelihoods, stationary, samples, rng)?;
    TheoremBound::from_parts(likelihoods.len(), gamma, rho2, kappa, expected, samples)
}

/// `log mu*_t(theta_t) - log mu_{k,t}(theta_t)` for each agent at time `t`.
pub fn log_ratios_at_truth<S: Scalar>(
    centralized: &CentralizedHistory<S>,
    strategy: &StrategyHistory<S>,
    trajectory: &StateTrajectory,
    time: usize,
) -> Result<Vec<S>> {
    if time == 0 || time > trajectory.len() || time >= strategy.beliefs.len() || time >= centralized.beliefs.len() {
        return Err(Error::Shape(format!("time {time} outside the recorded horizon")));
    }
    let truth = trajectory.states()[time - 1];
    let c = centralized.beliefs[time].log_prob(truth);
    Ok(strategy.beliefs[time].iter().map(|b| c - b.log_prob(truth)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epsilon<S> {
    Fixed(S),
    /// A multiple of the empirical standard deviation of the log-ratio.
    StdMultiple(S),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentCorollary<S> {
    pub agent: usize,
    pub variance: S,
    pub epsilon: S,
    /// `1 - Var / epsilon^2`.
    pub theoretical_p: S,
    /// Fraction of runs with `mu_k(theta) >= mu*(theta) exp(-epsilon - B)`.
    pub empirical_p: S,
    pub violation_rate: S,
    pub binomial_stderr: S,
    /// `empirical_p >= theoretical_p - 3 binomial_stderr`.
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorollaryReport<S> {
    pub bound: S,
    pub runs: usize,
    pub agents: Vec<AgentCorollary<S>>,
}

impl<S: Scalar> CorollaryReport<S> {
    pub fn all_satisfied(&self) -> bool {
        self.agents.iter().all(|a| a.satisfied)
    }
}

/// Checks the probabilistic belief guarantee at the true state.
///
/// `log_ratios[r][k]` holds `log mu*(theta) - log mu_k(theta)` of run `r`
/// at a fixed late time; `bound` is the asymptotic posterior risk bound `B`.
pub fn corollary1_check<S: Scalar>(log_ratios: &[Vec<S>], epsilon: Epsilon<S>, bound: S) -> Result<CorollaryReport<S>> {
    let runs = log_ratios.len();
    if runs == 0 {
        return Err(Error::Shape("no runs supplied".into()));
    }
    let k = log_ratios[0].len();
    if log_ratios.iter().any(|r| r.len() != k) {
        return Err(Error::Shape("runs report different agent counts".into()));
    }
    let n = S::of_usize(runs);
    let mut agents = Vec::with_capacity(k);
    for agent in 0..k {
        let xs: Vec<S> = log_ratios.iter().map(|r| r[agent]).collect();
        let mean = xs.iter().copied().sum::<S>() / n;
        let variance = xs.iter().map(|x| (*x - mean) * (*x - mean)).sum::<S>() / n;
        let eps = match epsilon {
            Epsilon::Fixed(e) => e,
            Epsilon::StdMultiple(m) => m * variance.sqrt(),
        };
        if !(eps > S::zero()) {
            return Err(Error::UninformativeEpsilon {
                epsilon: eps.as_f64(),
                p: f64::NAN,
            });
        }
        let theoretical_p = if eps.is_infinite() {
            S::one()
        } else {
            S::one() - variance / (eps * eps)
        };
        if !(theoretical_p > S::zero() && theoretical_p <= S::one()) {
            return Err(Error::UninformativeEpsilon {
                epsilon: eps.as_f64(),
                p: theoretical_p.as_f64(),
            });
        }
        let threshold = eps + bound;
        let hits = xs.iter().filter(|x| **x <= threshold).count();
        let empirical_p = S::of_usize(hits) / n;
        let binomial_stderr = (theoretical_p * (S::one() - theoretical_p) / n).sqrt();
        agents.push(AgentCorollary {
            agent,
            variance,
            epsilon: eps,
            theoretical_p,
            empirical_p,
            violation_rate: S::one() - empirical_p,
            binomial_stderr,
            satisfied: empirical_p >= theoretical_p - S::of(3.0) * binomial_stderr,
        });
    }
    Ok(CorollaryReport { bound, runs, agents })
}

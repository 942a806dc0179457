use std::f64::consts::{PI, SQRT_2};
use std::fmt::Debug;

use rand::Rng;
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-agent observation model `L_k(xi | theta)`.
///
/// Implementations must return finite log-likelihoods on their support and
/// report a bound `alpha >= |log L|` valid for every observation they can
/// emit.
pub trait Likelihood<S: Scalar>: Send + Sync {
    type Observation: Clone + Debug + Send + Sync;

    fn num_hypotheses(&self) -> usize;

    /// `log L(obs | hypothesis)`; off-support observations are an error.
    fn log_likelihood(&self, obs: &Self::Observation, hypothesis: usize) -> Result<S>;

    fn likelihood(&self, obs: &Self::Observation, hypothesis: usize) -> Result<S> {
        self.log_likelihood(obs, hypothesis).map(S::exp)
    }

    fn sample<R: Rng + ?Sized>(&self, hypothesis: usize, rng: &mut R) -> Self::Observation;

    /// Bound `alpha` on `|log L|` over the support.
    fn log_bound(&self) -> S;
}

/// Gaussian density with per-hypothesis means truncated to `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedGaussian<S> {
    means: Vec<S>,
    sigma: S,
    lo: S,
    hi: S,
    normalizers: Vec<S>,
    log_consts: Vec<S>,
    cdf_lo: Vec<f64>,
    alpha: S,
}

/// `Phi(b) - Phi(a)` for the standard normal, evaluated on the side of the
/// axis where the complementary error function does not cancel.
pub fn standard_normal_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        0.5 * (erfc(a / SQRT_2) - erfc(b / SQRT_2))
    } else {
        0.5 * (erfc(-b / SQRT_2) - erfc(-a / SQRT_2))
    }
}

pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

fn standard_normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

impl<S: Scalar> TruncatedGaussian<S> {
    pub fn new(means: Vec<S>, sigma: S, lo: S, hi: S) -> Result<Self> {
        if means.len() < 2 {
            return Err(Error::InvalidLikelihood("need a mean for at least 2 hypotheses".into()));
        }
        if !(sigma > S::zero()) || !sigma.is_finite() {
            return Err(Error::InvalidLikelihood(format!("sigma must be positive, got {sigma}")));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidLikelihood(format!("support [{lo}, {hi}] is empty or unbounded")));
        }
        let (s, l, h) = (sigma.as_f64(), lo.as_f64(), hi.as_f64());
        let mut normalizers = Vec::with_capacity(means.len());
        let mut log_consts = Vec::with_capacity(means.len());
        let mut cdf_lo = Vec::with_capacity(means.len());
        for m in &means {
            let m = m.as_f64();
            if !m.is_finite() {
                return Err(Error::InvalidLikelihood("means must be finite".into()));
            }
            let z = standard_normal_mass((l - m) / s, (h - m) / s);
            if !(z > 0.0) {
                return Err(Error::InvalidLikelihood(format!(
                    "mean {m} leaves no numerically representable mass on the support"
                )));
            }
            normalizers.push(S::of(z));
            log_consts.push(S::of(-z.ln() - s.ln() - 0.5 * (2.0 * PI).ln()));
            cdf_lo.push(standard_normal_cdf((l - m) / s));
        }
        let mut model = Self {
            means,
            sigma,
            lo,
            hi,
            normalizers,
            log_consts,
            cdf_lo,
            alpha: S::zero(),
        };
        model.alpha = model.analytic_log_bound();
        Ok(model)
    }

    /// Unit-variance Gaussians with means `theta + 1` truncated to `[-1, 2]`,
    /// the two-hypothesis benchmark model.
    pub fn benchmark() -> Self {
        Self::new(vec![S::one(), S::of(2.0)], S::one(), S::of(-1.0), S::of(2.0))
            .expect("benchmark parameters are valid")
    }

    pub fn means(&self) -> &[S] {
        &self.means
    }

    pub fn sigma(&self) -> S {
        self.sigma
    }

    pub fn support(&self) -> (S, S) {
        (self.lo, self.hi)
    }

    /// Gaussian mass `Z_theta` on the support.
    pub fn normalizer(&self, hypothesis: usize) -> S {
        self.normalizers[hypothesis]
    }

    // |log L| is extremal either at an endpoint or at the clamped mean.
    fn analytic_log_bound(&self) -> S {
        let mut alpha = S::zero();
        for (theta, m) in self.means.iter().enumerate() {
            let peak = m.max(self.lo).min(self.hi);
            for xi in [self.lo, self.hi, peak] {
                let v = self.log_density_unchecked(xi, theta).abs();
                if v > alpha {
                    alpha = v;
                }
            }
        }
        alpha
    }

    fn log_density_unchecked(&self, xi: S, theta: usize) -> S {
        let z = (xi - self.means[theta]) / self.sigma;
        self.log_consts[theta] - S::of(0.5) * z * z
    }
}

impl<S: Scalar> Likelihood<S> for TruncatedGaussian<S> {
    type Observation = S;

    fn num_hypotheses(&self) -> usize {
        self.means.len()
    }

    fn log_likelihood(&self, obs: &S, hypothesis: usize) -> Result<S> {
        if hypothesis >= self.means.len() {
            return Err(Error::HypothesisOutOfRange {
                hypothesis,
                num_hypotheses: self.means.len(),
            });
        }
        if !(*obs >= self.lo && *obs <= self.hi) {
            return Err(Error::OffSupport {
                value: obs.as_f64(),
                lo: self.lo.as_f64(),
                hi: self.hi.as_f64(),
            });
        }
        Ok(self.log_density_unchecked(*obs, hypothesis))
    }

    /// Inverse-CDF draw on the truncated interval: one uniform per sample.
    fn sample<R: Rng + ?Sized>(&self, hypothesis: usize, rng: &mut R) -> S {
        let u: f64 = rng.random();
        let z = self.normalizers[hypothesis].as_f64();
        let p = (self.cdf_lo[hypothesis] + u * z).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
        let x = self.means[hypothesis].as_f64() + self.sigma.as_f64() * standard_normal_quantile(p);
        S::of(x).max(self.lo).min(self.hi)
    }

    fn log_bound(&self) -> S {
        self.alpha
    }
}

/// Finite observation alphabet with an emission table `probs[theta][symbol]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLikelihood<S> {
    log_probs: Vec<Vec<S>>,
    probs: Vec<Vec<S>>,
    alpha: S,
}

impl<S: Scalar> DiscreteLikelihood<S> {
    pub fn new(probs: Vec<Vec<S>>) -> Result<Self> {
        let symbols = probs.first().map_or(0, Vec::len);
        if probs.len() < 2 || symbols == 0 {
            return Err(Error::InvalidLikelihood("need >= 2 hypotheses and >= 1 symbol".into()));
        }
        for (theta, row) in probs.iter().enumerate() {
            if row.len() != symbols {
                return Err(Error::InvalidLikelihood(format!("row {theta} has the wrong alphabet size")));
            }
            if row.iter().any(|p| !(*p > S::zero())) {
                return Err(Error::InvalidLikelihood(format!(
                    "row {theta} has a non-positive mass; log-likelihoods must stay bounded"
                )));
            }
            let sum: S = row.iter().copied().sum();
            if (sum - S::one()).abs() > S::of(1e-9).max(S::epsilon() * S::of(16.0)) {
                return Err(Error::InvalidLikelihood(format!("row {theta} sums to {sum}")));
            }
        }
        let log_probs: Vec<Vec<S>> = probs.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect();
        let alpha = log_probs.iter().flatten().map(|v| v.abs()).fold(S::zero(), S::max);
        Ok(Self { log_probs, probs, alpha })
    }

    pub fn num_symbols(&self) -> usize {
        self.probs[0].len()
    }
}

impl<S: Scalar> Likelihood<S> for DiscreteLikelihood<S> {
    type Observation = usize;

    fn num_hypotheses(&self) -> usize {
        self.probs.len()
    }

    fn log_likelihood(&self, obs: &usize, hypothesis: usize) -> Result<S> {
        let row = self.log_probs.get(hypothesis).ok_or(Error::HypothesisOutOfRange {
            hypothesis,
            num_hypotheses: self.probs.len(),
        })?;
        row.get(*obs).copied().ok_or(Error::OffSupport {
            value: *obs as f64,
            lo: 0.0,
            hi: (row.len() - 1) as f64,
        })
    }

    fn sample<R: Rng + ?Sized>(&self, hypothesis: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs[hypothesis].iter().enumerate() {
            acc += p.as_f64();
            if u < acc {
                return i;
            }
        }
        self.num_symbols() - 1
    }

    fn log_bound(&self) -> S {
        self.alpha
    }
}

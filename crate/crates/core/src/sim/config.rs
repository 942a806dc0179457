//! Declarative experiment description, loaded from a TOML file.
//!
//! ```toml
//! [experiment]
//! name = "fig3"
//! horizon = 500
//! runs = 1000
//! seed = 7
//!
//! [chain]
//! delta = 0.1              # or `matrix = [[..], ..]`
//!
//! [likelihood]
//! kind = "truncated_gaussian"
//! means = [1.0, 2.0]
//! sigma = 1.0
//! lo = -1.0
//! hi = 2.0
//!
//! [topology]
//! networks = ["fixture:sparse-k10", "fixture:reference-k10", "complete:10"]
//!
//! [strategy.dhmm]
//! kind = "diffusion"
//! gamma = "K"              # a number, or "K" for the network size
//!
//! [metrics]
//! readout_start = 401
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{Belief, StrategySpec};
use crate::graph::{
    fixture, metropolis_weights, random_connected_topology, second_eigenvalue_magnitude, CombinationMatrix, Topology,
};
use crate::metrics::ReadoutWindow;
use crate::models::{TransitionModel, TruncatedGaussian};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub chain: ChainSection,
    #[serde(default)]
    pub likelihood: LikelihoodSection,
    pub topology: TopologySection,
    #[serde(default)]
    pub beliefs: BeliefSection,
    #[serde(default)]
    pub strategy: BTreeMap<String, StrategySection>,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub sweep: SweepSection,
    /// Directory that `file:` network paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default)]
    pub name: String,
    pub horizon: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads for Monte Carlo runs; 0 picks the machine default.
    #[serde(default)]
    pub workers: usize,
}

fn default_runs() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    /// Switching probability of a two-state binary symmetric chain.
    pub delta: Option<f64>,
    /// Full transition matrix, `matrix[prev][next]`.
    pub matrix: Option<Vec<Vec<f64>>>,
    /// Law of the first hidden state; uniform by default.
    pub initial: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LikelihoodSection {
    #[serde(default = "default_likelihood_kind")]
    pub kind: String,
    #[serde(default = "default_means")]
    pub means: Vec<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_lo")]
    pub lo: f64,
    #[serde(default = "default_hi")]
    pub hi: f64,
}

fn default_likelihood_kind() -> String {
    "truncated_gaussian".into()
}
fn default_means() -> Vec<f64> {
    vec![1.0, 2.0]
}
fn default_sigma() -> f64 {
    1.0
}
fn default_lo() -> f64 {
    -1.0
}
fn default_hi() -> f64 {
    2.0
}

impl Default for LikelihoodSection {
    fn default() -> Self {
        Self {
            kind: default_likelihood_kind(),
            means: default_means(),
            sigma: default_sigma(),
            lo: default_lo(),
            hi: default_hi(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    /// Network specs: `fixture:NAME`, `complete:K`, `path:K`,
    /// `random:K:DENSITY:SEED` or `file:PATH` (edge list).
    pub networks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeliefSection {
    /// Shared initial belief of every agent and the centralized filter.
    pub initial: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    pub kind: String,
    pub gamma: Option<GammaSpec>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    Value(f64),
    /// `"K"`: the number of agents of the network being simulated.
    Symbol(String),
}

impl GammaSpec {
    pub fn resolve(&self, num_agents: usize) -> Result<f64> {
        match self {
            GammaSpec::Value(v) => Ok(*v),
            GammaSpec::Symbol(s) if s == "K" => Ok(num_agents as f64),
            GammaSpec::Symbol(s) => Err(Error::Parse(format!("gamma must be a number or \"K\", got {s:?}"))),
        }
    }
}

impl fmt::Display for GammaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GammaSpec::Value(v) => write!(f, "{v}"),
            GammaSpec::Symbol(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    /// First time index of the asymptotic read-out window (inclusive);
    /// defaults to the final 20% of the horizon.
    pub readout_start: Option<usize>,
    /// Monte Carlo samples for the expected log-likelihood sup-norm.
    #[serde(default = "default_bound_samples")]
    pub bound_samples: usize,
    /// Time at which the belief guarantee is checked; defaults to the horizon.
    pub corollary_time: Option<usize>,
    /// Epsilon as a multiple of the log-ratio standard deviation.
    #[serde(default = "default_epsilon_multiple")]
    pub epsilon_std_multiple: f64,
}

fn default_bound_samples() -> usize {
    100_000
}
fn default_epsilon_multiple() -> f64 {
    2.0
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            readout_start: None,
            bound_samples: default_bound_samples(),
            corollary_time: None,
            epsilon_std_multiple: default_epsilon_multiple(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub gammas: Vec<f64>,
}

/// A resolved network: topology, Metropolis weights and mixing rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub label: String,
    pub topology: Topology,
    pub combination: CombinationMatrix<f64>,
    pub rho2: f64,
}

impl Network {
    pub fn from_topology(label: impl Into<String>, topology: Topology) -> Result<Self> {
        let combination = metropolis_weights(&topology)?;
        let rho2 = second_eigenvalue_magnitude(&combination);
        Ok(Self {
            label: label.into(),
            topology,
            combination,
            rho2,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.topology.num_agents()
    }

    /// Parses a network spec string (see [`TopologySection::networks`]).
    pub fn from_spec(spec: &str, base_dir: Option<&Path>) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        let count = |s: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|_| Error::Parse(format!("network `{spec}`: `{s}` is not an agent count")))
        };
        match parts.as_slice() {
            ["fixture", name] => Self::from_topology(*name, fixture(name)?),
            ["complete", k] => {
                let k = count(k)?;
                Self::from_topology(format!("complete-{k}"), Topology::complete(k))
            }
            ["path", k] => {
                let k = count(k)?;
                Self::from_topology(format!("path-{k}"), Topology::path(k))
            }
            ["random", k, density, seed] => {
                let k = count(k)?;
                let d: f64 = density
                    .parse()
                    .map_err(|_| Error::Parse(format!("network `{spec}`: bad density")))?;
                let s: u64 = seed
                    .parse()
                    .map_err(|_| Error::Parse(format!("network `{spec}`: bad seed")))?;
                Self::from_topology(format!("random-{k}-{d}-{s}"), random_connected_topology(k, d, s)?)
            }
            ["file", path] => {
                let p = match base_dir {
                    Some(dir) => dir.join(path),
                    None => PathBuf::from(path),
                };
                let text = std::fs::read_to_string(&p)?;
                let label = p.file_stem().map_or_else(|| "file".to_string(), |s| s.to_string_lossy().into_owned());
                Self::from_topology(label, Topology::parse_edge_list(&text)?)
            }
            _ => Err(Error::Parse(format!(
                "network `{spec}` is not one of fixture:NAME, complete:K, path:K, random:K:DENSITY:SEED, file:PATH"
            ))),
        }
    }
}

/// Strategy whose step-size may depend on the network size.
#[derive(Debug, Clone, PartialEq)]
pub enum StrategyTemplate {
    Diffusion { gamma: GammaSpec },
    Asl { delta: f64 },
}

impl StrategyTemplate {
    pub fn instantiate(&self, name: &str, num_agents: usize) -> Result<StrategySpec<f64>> {
        Ok(match self {
            StrategyTemplate::Diffusion { gamma } => StrategySpec::diffusion(name, gamma.resolve(num_agents)?),
            StrategyTemplate::Asl { delta } => StrategySpec::asl(name, *delta),
        })
    }
}

/// Everything a configuration resolves to, independent of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub transition: TransitionModel<f64>,
    pub likelihood: TruncatedGaussian<f64>,
    pub prior: Belief<f64>,
    pub strategies: Vec<(String, StrategyTemplate)>,
    pub networks: Vec<Network>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        apply_overrides(&mut table, overrides)?;
        table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(vec![e.message().to_string()]))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    /// Canonical TOML rendering (after overrides), used for hashing.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn window(&self) -> ReadoutWindow {
        match self.metrics.readout_start {
            Some(start) => ReadoutWindow { start },
            None => ReadoutWindow::tail_fifth(self.experiment.horizon),
        }
    }

    pub fn corollary_time(&self) -> usize {
        self.metrics.corollary_time.unwrap_or(self.experiment.horizon)
    }

    pub fn transition(&self) -> Result<TransitionModel<f64>> {
        let c = &self.chain;
        let t = match (c.delta, &c.matrix) {
            (Some(d), None) => TransitionModel::binary_symmetric(d)?,
            (None, Some(m)) => TransitionModel::new(m.clone())?,
            (Some(_), Some(_)) => {
                return Err(Error::InvalidTransition("set either chain.delta or chain.matrix, not both".into()))
            }
            (None, None) => return Err(Error::InvalidTransition("chain.delta or chain.matrix is required".into())),
        };
        match &c.initial {
            Some(init) => t.set_initial(init.clone()),
            None => Ok(t),
        }
    }

    pub fn likelihood(&self) -> Result<TruncatedGaussian<f64>> {
        let l = &self.likelihood;
        if l.kind != "truncated_gaussian" {
            return Err(Error::InvalidLikelihood(format!(
                "unknown likelihood kind `{}` (supported: truncated_gaussian)",
                l.kind
            )));
        }
        TruncatedGaussian::new(l.means.clone(), l.sigma, l.lo, l.hi)
    }

    pub fn prior(&self, num_hypotheses: usize) -> Result<Belief<f64>> {
        match &self.beliefs.initial {
            None => Ok(Belief::uniform(num_hypotheses)),
            Some(w) => {
                if w.len() != num_hypotheses {
                    return Err(Error::Shape(format!(
                        "beliefs.initial has {} entries, the chain has {num_hypotheses} hypotheses",
                        w.len()
                    )));
                }
                let b = Belief::from_probabilities(w)?;
                b.check_positive()?;
                Ok(b)
            }
        }
    }

    pub fn strategies(&self) -> Result<Vec<(String, StrategyTemplate)>> {
        let mut issues = Vec::new();
        let mut out = Vec::new();
        for (name, s) in &self.strategy {
            match s.kind.as_str() {
                "diffusion" => match &s.gamma {
                    Some(g) => {
                        match g {
                            GammaSpec::Value(v) if !(*v > 0.0) || !v.is_finite() => issues.push(format!(
                                "strategy.{name}.gamma = {v}: the step-size must satisfy γ > 0"
                            )),
                            GammaSpec::Symbol(s) if s != "K" => {
                                issues.push(format!("strategy.{name}.gamma must be a number or \"K\", got {s:?}"))
                            }
                            _ => {}
                        }
                        out.push((name.clone(), StrategyTemplate::Diffusion { gamma: g.clone() }));
                    }
                    None => issues.push(format!("strategy.{name}: diffusion strategies need `gamma`")),
                },
                "asl" => match s.delta {
                    Some(d) if d > 0.0 && d < 1.0 => out.push((name.clone(), StrategyTemplate::Asl { delta: d })),
                    Some(d) => issues.push(format!("strategy.{name}.delta = {d}: ASL needs 0 < δ < 1")),
                    None => issues.push(format!("strategy.{name}: asl strategies need `delta`")),
                },
                other => issues.push(format!("strategy.{name}.kind `{other}` is not `diffusion` or `asl`")),
            }
        }
        if issues.is_empty() {
            Ok(out)
        } else {
            Err(Error::Config(issues))
        }
    }

    pub fn networks(&self) -> Result<Vec<Network>> {
        self.topology
            .networks
            .iter()
            .map(|s| Network::from_spec(s, self.base_dir.as_deref()))
            .collect()
    }

    /// Checks the whole configuration and reports every problem found.
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.experiment.runs == 0 {
            issues.push("experiment.runs must be at least 1".to_string());
        }
        let transition = self
            .transition()
            .map_err(|e| issues.push(format!("chain: {e}")))
            .ok();
        let likelihood = self
            .likelihood()
            .map_err(|e| issues.push(format!("likelihood: {e}")))
            .ok();
        let h = transition.as_ref().map(|t| t.num_hypotheses());
        if let (Some(h), Some(l)) = (h, likelihood.as_ref()) {
            if l.means().len() != h {
                issues.push(format!(
                    "likelihood.means has {} entries, the chain has {h} hypotheses",
                    l.means().len()
                ));
            }
        }
        if let Some(w) = &self.beliefs.initial {
            if let Some((i, v)) = w.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                issues.push(format!(
                    "beliefs.initial[{i}] = {v}: initial beliefs must be strictly positive at every hypothesis"
                ));
            } else if let Some(h) = h {
                if w.len() != h {
                    issues.push(format!("beliefs.initial has {} entries, the chain has {h} hypotheses", w.len()));
                }
            }
        }
        match self.strategies() {
            Ok(s) if s.is_empty() => issues.push("at least one [strategy.NAME] section is required".to_string()),
            Ok(_) => {}
            Err(Error::Config(list)) => issues.extend(list),
            Err(e) => issues.push(e.to_string()),
        }
        if self.topology.networks.is_empty() {
            issues.push("topology.networks must list at least one network".to_string());
        }
        for spec in &self.topology.networks {
            if let Err(e) = Network::from_spec(spec, self.base_dir.as_deref()) {
                issues.push(format!("topology `{spec}`: {e}"));
            }
        }
        let n = self.experiment.horizon;
        if let Some(start) = self.metrics.readout_start {
            if start == 0 || start > n {
                issues.push(format!("metrics.readout_start = {start} must lie in [1, horizon = {n}]"));
            }
        }
        if let Some(t) = self.metrics.corollary_time {
            if t == 0 || t > n {
                issues.push(format!("metrics.corollary_time = {t} must lie in [1, horizon = {n}]"));
            }
        }
        if self.metrics.bound_samples == 0 {
            issues.push("metrics.bound_samples must be at least 1".to_string());
        }
        if !(self.metrics.epsilon_std_multiple > 1.0) {
            issues.push("metrics.epsilon_std_multiple must exceed 1 for a positive probability".to_string());
        }
        for g in &self.sweep.gammas {
            if !(*g > 0.0) {
                issues.push(format!("sweep.gammas contains {g}: the step-size must satisfy γ > 0"));
            }
        }
        issues
    }

    /// Validates and resolves every model object.
    pub fn scenario(&self) -> Result<Scenario> {
        let issues = self.validate();
        if !issues.is_empty() {
            return Err(Error::Config(issues));
        }
        let transition = self.transition()?;
        let h = transition.num_hypotheses();
        Ok(Scenario {
            likelihood: self.likelihood()?,
            prior: self.prior(h)?,
            strategies: self.strategies()?,
            networks: self.networks()?,
            transition,
        })
    }
}

/// Applies `dotted.key=value` overrides. Values are parsed as TOML
/// (numbers, booleans, arrays, quoted strings) and fall back to a bare
/// string.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(vec![format!("override `{item}` is not KEY=VALUE")]))?;
        let key = key.trim();
        let raw = raw.trim();
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let path: Vec<&str> = key.split('.').collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(Error::Config(vec![format!("override key `{key}` is malformed")]));
        }
        let mut cursor = &mut *table;
        for segment in &path[..path.len() - 1] {
            let entry = cursor
                .entry(segment.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            cursor = entry
                .as_table_mut()
                .ok_or_else(|| Error::Config(vec![format!("override `{key}`: `{segment}` is not a section")]))?;
        }
        cursor.insert(path[path.len() - 1].to_string(), value);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[experiment]
horizon = 50
runs = 4
seed = 1

[chain]
delta = 0.1

[topology]
networks = ["complete:3"]

[strategy.dhmm]
kind = "diffusion"
gamma = "K"

[strategy.asl]
kind = "asl"
delta = 0.1
"#;

    #[test]
    fn parses_and_defaults() {
        let c = ExperimentConfig::from_toml_str(BASE, &[]).unwrap();
        assert!(c.validate().is_empty(), "{:?}", c.validate());
        assert_eq!(c.likelihood, LikelihoodSection::default());
        assert_eq!(c.window(), ReadoutWindow { start: 41 });
        let s = c.scenario().unwrap();
        assert_eq!(s.networks[0].num_agents(), 3);
        assert_eq!(s.strategies.len(), 2);
        let spec = s.strategies[1].1.instantiate("dhmm", 3).unwrap();
        assert_eq!(spec, StrategySpec::diffusion("dhmm", 3.0));
    }

    #[test]
    fn overrides_apply_dotted_paths() {
        let c = ExperimentConfig::from_toml_str(
            BASE,
            &[
                "strategy.dhmm.gamma=5".into(),
                "experiment.runs = 9".into(),
                "topology.networks=[\"path:4\"]".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.strategy["dhmm"].gamma, Some(GammaSpec::Value(5.0)));
        assert_eq!(c.experiment.runs, 9);
        assert_eq!(c.topology.networks, vec!["path:4".to_string()]);
        assert!(ExperimentConfig::from_toml_str(BASE, &["novalue".into()]).is_err());
        assert!(ExperimentConfig::from_toml_str(BASE, &["chain.delta.x=1".into()]).is_err());
    }

    #[test]
    fn zero_gamma_is_rejected_with_constraint() {
        let c = ExperimentConfig::from_toml_str(BASE, &["strategy.dhmm.gamma=0".into()]).unwrap();
        let issues = c.validate();
        assert!(issues.iter().any(|m| m.contains("γ > 0")), "{issues:?}");
    }

    #[test]
    fn zero_prior_is_rejected() {
        let c = ExperimentConfig::from_toml_str(BASE, &["beliefs.initial=[1.0, 0.0]".into()]).unwrap();
        let issues = c.validate();
        assert!(issues.iter().any(|m| m.contains("strictly positive")), "{issues:?}");
    }

    #[test]
    fn all_problems_reported_together() {
        let c = ExperimentConfig::from_toml_str(
            BASE,
            &[
                "experiment.runs=0".into(),
                "chain.delta=2.0".into(),
                "strategy.asl.delta=1.5".into(),
                "topology.networks=[\"fixture:missing\", \"bogus\"]".into(),
            ],
        )
        .unwrap();
        let issues = c.validate();
        assert_eq!(issues.len(), 5, "{issues:?}");
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = format!("{BASE}\n[metrics]\nbogus = 1\n");
        assert!(ExperimentConfig::from_toml_str(&text, &[]).is_err());
    }

    #[test]
    fn network_specs() {
        assert_eq!(Network::from_spec("complete:4", None).unwrap().label, "complete-4");
        assert!(Network::from_spec("complete:4", None).unwrap().rho2 < 1e-12);
        assert!(Network::from_spec("random:8:0.3:2", None).is_ok());
        assert!(Network::from_spec("random:8:x:2", None).is_err());
        assert!(Network::from_spec("complete", None).is_err());
        assert!(Network::from_spec("path:k", None).is_err());
    }
}

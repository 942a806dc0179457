use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::metrics::{fmt_scalar, Estimate};
use crate::sim::config::ExperimentConfig;
use crate::sim::experiment::{ExperimentReport, GammaSweep, NetworkOutcome, RunArtifact};

fn opt(v: Option<f64>) -> String {
    v.map(fmt_scalar).unwrap_or_default()
}

/// `time,agent,strategy,hypothesis,belief` for every recorded belief,
/// including the prior at time 0. Centralized rows use agent `*`.
pub fn beliefs_csv(artifact: &RunArtifact) -> String {
    let h = &artifact.histories;
    let mut out = String::from("time,agent,strategy,hypothesis,belief\n");
    for t in 0..=h.horizon() {
        for (theta, p) in h.centralized.beliefs[t].probabilities().into_iter().enumerate() {
            let _ = writeln!(out, "{t},*,centralized,{theta},{}", fmt_scalar(p));
        }
        for s in &h.strategies {
            for (k, b) in s.beliefs[t].iter().enumerate() {
                for (theta, p) in b.probabilities().into_iter().enumerate() {
                    let _ = writeln!(out, "{t},{k},{},{theta},{}", s.spec.name, fmt_scalar(p));
                }
            }
        }
    }
    out
}

/// `time,state` for the hidden trajectory of a recorded run.
pub fn states_csv(artifact: &RunArtifact) -> String {
    let mut out = String::from("time,state\n");
    for (i, s) in artifact.trajectory.states().iter().enumerate() {
        let _ = writeln!(out, "{},{s}", i + 1);
    }
    out
}

pub const RISKS_HEADER: &str = "network,strategy,time,agent,J_mean,J_stderr,Jtilde_mean,Jtilde_stderr";

pub fn risks_csv(networks: &[NetworkOutcome]) -> String {
    let mut out = format!("{RISKS_HEADER}\n");
    for net in networks {
        for s in &net.strategies {
            s.risks
                .write_csv_rows(&mut out, &format!("{},{},", net.network.label, s.spec.name));
        }
    }
    out
}

pub const SUMMARY_HEADER: &str = "network,num_agents,rho2,strategy,J_asymptotic,J_stderr,Jtilde_asymptotic,Jtilde_stderr,posterior_bound,prior_bound";

pub fn summary_csv(networks: &[NetworkOutcome]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for net in networks {
        for s in &net.strategies {
            let a = s.risks.asymptotic;
            let ap = s.risks.asymptotic_prior;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                net.network.label,
                net.network.num_agents(),
                fmt_scalar(net.network.rho2),
                s.spec.name,
                fmt_scalar(a.mean),
                opt(a.stderr),
                opt(ap.map(|e| e.mean)),
                opt(ap.and_then(|e| e.stderr)),
                opt(s.bound.map(|b| b.posterior_bound)),
                opt(s.bound.map(|b| b.prior_bound)),
            );
        }
    }
    out
}

/// Flat `network.strategy.key = value` lines for every evaluated bound.
pub fn bounds_text(networks: &[NetworkOutcome]) -> String {
    let mut out = String::new();
    for net in networks {
        for s in &net.strategies {
            if let Some(b) = &s.bound {
                for line in b.to_key_value().lines() {
                    let _ = writeln!(out, "{}.{}.{line}", net.network.label, s.spec.name);
                }
            }
        }
    }
    out
}

pub const COROLLARY_HEADER: &str =
    "network,strategy,agent,variance,epsilon,bound,theoretical_p,empirical_p,binomial_stderr,satisfied";

pub fn corollary_csv(networks: &[NetworkOutcome]) -> String {
    let mut out = format!("{COROLLARY_HEADER}\n");
    for net in networks {
        for s in &net.strategies {
            if let Some(c) = &s.corollary {
                for a in &c.agents {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{},{}",
                        net.network.label,
                        s.spec.name,
                        a.agent,
                        fmt_scalar(a.variance),
                        fmt_scalar(a.epsilon),
                        fmt_scalar(c.bound),
                        fmt_scalar(a.theoretical_p),
                        fmt_scalar(a.empirical_p),
                        fmt_scalar(a.binomial_stderr),
                        a.satisfied,
                    );
                }
            }
        }
    }
    out
}

pub const GAMMA_HEADER: &str = "network,rho2,gamma,lambda,J_asymptotic,J_stderr,Jtilde_asymptotic,Jtilde_stderr,tracking_gap";

pub fn gamma_csv(sweeps: &[GammaSweep]) -> String {
    let mut out = format!("{GAMMA_HEADER}\n");
    for sw in sweeps {
        for p in &sw.points {
            let ap: Option<Estimate<f64>> = p.asymptotic_prior;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                sw.network,
                fmt_scalar(sw.rho2),
                fmt_scalar(p.gamma),
                fmt_scalar(p.lambda),
                fmt_scalar(p.asymptotic.mean),
                opt(p.asymptotic.stderr),
                opt(ap.map(|e| e.mean)),
                opt(ap.and_then(|e| e.stderr)),
                fmt_scalar(p.tracking_gap),
            );
        }
    }
    out
}

/// File name for a network's sample-run export: `base.csv` for the first
/// network, `base-<label>.csv` for the rest.
fn per_network_name(base: &str, index: usize, label: &str) -> String {
    if index == 0 {
        format!("{base}.csv")
    } else {
        let safe: String = label
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '-' })
            .collect();
        format!("{base}-{safe}.csv")
    }
}

/// Collects output files and records their hashes in `manifest.txt`.
#[derive(Debug)]
pub struct OutputWriter {
    dir: PathBuf,
    entries: Vec<(String, String)>,
}

impl OutputWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        self.entries.push((name.to_string(), sha256_hex(contents.as_bytes())));
        Ok(path)
    }

    /// Writes `manifest.txt` and returns the paths of everything written.
    pub fn finish(self, config: &ExperimentConfig, command: &str) -> Result<Vec<PathBuf>> {
        let resolved = config.to_toml_string();
        let mut m = String::new();
        let _ = writeln!(m, "tool = {} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
        let _ = writeln!(m, "command = {command}");
        let _ = writeln!(m, "config_sha256 = {}", sha256_hex(resolved.as_bytes()));
        let _ = writeln!(m, "seed = {}", config.experiment.seed);
        let _ = writeln!(m, "runs = {}", config.experiment.runs);
        let _ = writeln!(m, "horizon = {}", config.experiment.horizon);
        for (name, hash) in &self.entries {
            let _ = writeln!(m, "file.{name} = {hash}");
        }
        fs::write(self.dir.join("manifest.txt"), m)?;
        let mut paths: Vec<PathBuf> = self.entries.iter().map(|(n, _)| self.dir.join(n)).collect();
        paths.push(self.dir.join("manifest.txt"));
        Ok(paths)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes every artifact of an experiment into `dir`.
pub fn write_report(dir: &Path, report: &ExperimentReport, config: &ExperimentConfig, command: &str) -> Result<Vec<PathBuf>> {
    let mut w = OutputWriter::new(dir)?;
    w.write("config.resolved.toml", &config.to_toml_string())?;
    for (i, net) in report.networks.iter().enumerate() {
        w.write(&per_network_name("beliefs", i, &net.network.label), &beliefs_csv(&net.sample))?;
        w.write(&per_network_name("states", i, &net.network.label), &states_csv(&net.sample))?;
    }
    w.write("risks.csv", &risks_csv(&report.networks))?;
    w.write("summary.csv", &summary_csv(&report.networks))?;
    w.write("bound.txt", &bounds_text(&report.networks))?;
    w.write("corollary.csv", &corollary_csv(&report.networks))?;
    let mut digests = String::new();
    for net in &report.networks {
        let _ = writeln!(digests, "{} = {}", net.network.label, net.data_digest);
    }
    w.write("data_digest.txt", &digests)?;
    w.finish(config, command)
}

/// Writes the artifacts of a step-size sweep into `dir`.
pub fn write_gamma_sweep(dir: &Path, sweeps: &[GammaSweep], config: &ExperimentConfig, command: &str) -> Result<Vec<PathBuf>> {
    let mut w = OutputWriter::new(dir)?;
    w.write("config.resolved.toml", &config.to_toml_string())?;
    w.write("gamma_sweep.csv", &gamma_csv(sweeps))?;
    let outcomes: Vec<NetworkOutcome> = sweeps.iter().map(|s| s.outcome.clone()).collect();
    w.write("risks.csv", &risks_csv(&outcomes))?;
    w.write("bound.txt", &bounds_text(&outcomes))?;
    w.finish(config, command)
}

//! Command-line frontend. Exit codes: 0 success, 1 runtime failure, 2 usage
//! or configuration error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::metrics::fmt_scalar;
use crate::sim::experiment::{gamma_sweep, network_bounds, risk_vs_topology_sweep, run_experiment, ExperimentReport, RunSettings};
use crate::sim::export::{write_gamma_sweep, write_report};
use crate::sim::ExperimentConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dhmm", version, about = "Diffusion hidden Markov model filtering over graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every strategy on every configured network and export the results.
    Run(CommonArgs),
    /// Compare diffusion step-sizes on identical data.
    SweepGamma(CommonArgs),
    /// Run the configured networks, ordered by mixing rate.
    SweepTopology(CommonArgs),
    /// Evaluate the asymptotic risk bounds without running any filter.
    Bound(CommonArgs),
    /// Check a configuration and report every problem found.
    ValidateConfig(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Configuration file.
    #[arg(value_name = "CONFIG", conflicts_with = "config")]
    pub config_path: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "DHMM_OUT", default_value = "dhmm-out")]
    pub out: PathBuf,
    /// Dotted-key override, e.g. `strategy.dhmm.gamma=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub quiet: bool,
}

impl CommonArgs {
    fn path(&self) -> Option<&Path> {
        self.config_path.as_deref().or(self.config.as_deref())
    }

    fn overrides(&self) -> Vec<String> {
        let mut o = self.set.clone();
        if let Some(w) = self.workers {
            o.push(format!("experiment.workers={w}"));
        }
        if let Some(r) = self.runs {
            o.push(format!("experiment.runs={r}"));
        }
        if let Some(s) = self.seed {
            o.push(format!("experiment.seed={s}"));
        }
        o
    }
}

enum Failure {
    Config(Vec<String>),
    Runtime(String),
}

impl Failure {
    fn report(self) -> i32 {
        match self {
            Failure::Config(items) => {
                eprintln!("configuration error:");
                for i in items {
                    eprintln!("  - {i}");
                }
                EXIT_CONFIG
            }
            Failure::Runtime(msg) => {
                eprintln!("error: {msg}");
                EXIT_RUNTIME
            }
        }
    }
}

fn config_failure(e: Error) -> Failure {
    match e {
        Error::Config(items) => Failure::Config(items),
        other => Failure::Config(vec![other.to_string()]),
    }
}

fn runtime_failure(e: Error) -> Failure {
    match e {
        Error::Config(items) => Failure::Config(items),
        other => Failure::Runtime(other.to_string()),
    }
}

/// Loads the configuration and checks it in full before anything runs.
fn load(args: &CommonArgs) -> Result<ExperimentConfig, Failure> {
    let path = args
        .path()
        .ok_or_else(|| Failure::Config(vec!["no configuration file given".into()]))?;
    let config = ExperimentConfig::load(path, &args.overrides())
        .map_err(|e| Failure::Config(vec![format!("{}: {e}", path.display())]))?;
    let issues = config.validate();
    if issues.is_empty() {
        Ok(config)
    } else {
        Err(Failure::Config(issues))
    }
}

/// Parses `argv` and runs the selected command, returning the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let command_line = argv.iter().map(|a| a.to_string_lossy()).collect::<Vec<_>>().join(" ");
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, &command_line, false),
        Command::SweepTopology(a) => cmd_run(a, &command_line, true),
        Command::SweepGamma(a) => cmd_sweep_gamma(a, &command_line),
        Command::Bound(a) => cmd_bound(a),
        Command::ValidateConfig(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => f.report(),
    }
}

fn print_summary(report: &ExperimentReport) {
    println!("experiment `{}`: {} runs, horizon {}", report.name, report.settings.runs, report.settings.horizon);
    for net in &report.networks {
        println!("network {} (K = {}, rho2 = {:.4})", net.network.label, net.network.num_agents(), net.network.rho2);
        for s in &net.strategies {
            let a = s.risks.asymptotic;
            let mut line = format!("  {:<12} J = {:.5}", s.spec.name, a.mean);
            if let Some(se) = a.stderr {
                line.push_str(&format!(" +- {se:.5}"));
            }
            if let Some(p) = s.risks.asymptotic_prior {
                line.push_str(&format!("  Jtilde = {:.5}", p.mean));
            }
            if let Some(b) = &s.bound {
                line.push_str(&format!("  bounds = {:.4} / {:.4}", b.posterior_bound, b.prior_bound));
            }
            if let Some(c) = &s.corollary {
                line.push_str(if c.all_satisfied() { "  guarantee ok" } else { "  guarantee VIOLATED" });
            }
            println!("{line}");
        }
    }
}

fn cmd_run(args: &CommonArgs, command_line: &str, sort_by_rho2: bool) -> Result<(), Failure> {
    let config = load(args)?;
    let report = if sort_by_rho2 {
        risk_vs_topology_sweep(&config)
    } else {
        run_experiment(&config)
    }
    .map_err(runtime_failure)?;
    let files = write_report(&args.out, &report, &config, command_line).map_err(runtime_failure)?;
    if !args.quiet {
        print_summary(&report);
        println!("wrote {} files to {}", files.len(), args.out.display());
    }
    Ok(())
}

fn cmd_sweep_gamma(args: &CommonArgs, command_line: &str) -> Result<(), Failure> {
    let config = load(args)?;
    if config.sweep.gammas.is_empty() {
        return Err(Failure::Config(vec!["sweep.gammas must list at least one step-size".into()]));
    }
    let sweeps = gamma_sweep(&config, &config.sweep.gammas).map_err(runtime_failure)?;
    let files = write_gamma_sweep(&args.out, &sweeps, &config, command_line).map_err(runtime_failure)?;
    if !args.quiet {
        for sw in &sweeps {
            println!("network {} (rho2 = {:.4})", sw.network, sw.rho2);
            for p in &sw.points {
                println!(
                    "  gamma = {:<8} lambda = {:.4}  J = {:.5}  tracking gap = {:.4}",
                    p.gamma, p.lambda, p.asymptotic.mean, p.tracking_gap
                );
            }
        }
        println!("wrote {} files to {}", files.len(), args.out.display());
    }
    Ok(())
}

fn cmd_bound(args: &CommonArgs) -> Result<(), Failure> {
    let config = load(args)?;
    let scenario = config.scenario().map_err(config_failure)?;
    let kappa = scenario.transition.dobrushin_coefficient();
    if !(kappa < 1.0) {
        return Err(Failure::Config(vec![format!(
            "the chain has Dobrushin coefficient kappa = {kappa}; the bounds require a geometrically ergodic model (kappa < 1)"
        )]));
    }
    let settings = RunSettings::from_config(&config);
    for net in &scenario.networks {
        let strategies = scenario
            .strategies
            .iter()
            .map(|(name, t)| t.instantiate(name, net.num_agents()))
            .collect::<crate::Result<Vec<_>>>()
            .map_err(config_failure)?;
        let (_, bounds) = network_bounds(&scenario, net, &strategies, &settings).map_err(runtime_failure)?;
        for (spec, bound) in strategies.iter().zip(bounds) {
            let Some(b) = bound else { continue };
            if !args.quiet {
                println!("network {} strategy {}", net.label, spec.name);
                println!("  lambda          = {}", fmt_scalar(b.lambda));
                println!("  kappa           = {}", fmt_scalar(b.kappa));
                println!(
                    "  E|L|_inf        = {} +- {}",
                    fmt_scalar(b.sup_expected_linf),
                    fmt_scalar(b.sup_expected_linf_stderr)
                );
                println!("  posterior_bound = {}", fmt_scalar(b.posterior_bound));
                println!("  prior_bound     = {}", fmt_scalar(b.prior_bound));
                let ratio = if b.posterior_bound > 0.0 { b.prior_bound / b.posterior_bound } else { kappa };
                println!("  prior/posterior = {}", fmt_scalar(ratio));
            }
        }
    }
    Ok(())
}

fn cmd_validate(args: &CommonArgs) -> Result<(), Failure> {
    let config = load(args)?;
    if !args.quiet {
        let path = args.path().map(|p| p.display().to_string()).unwrap_or_default();
        println!("{path}: ok ({} network(s), {} strategy section(s))", config.topology.networks.len(), config.strategy.len());
    }
    Ok(())
}

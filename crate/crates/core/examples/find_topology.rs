//! Searches seeded random connected graphs for a target mixing rate.
//!
//! ```text
//! cargo run --release --example find_topology -- --agents 10 --rho2 0.86 --risk-runs 100
//! cargo run --release --example find_topology -- --agents 10 --density 0.3 --seed 17 --emit
//! ```
//!
//! Candidates are printed as `density seed rho2 [J]`, where `J` is the
//! long-run network-average risk of the diffusion filter with `gamma = K`.

use clap::Parser;
use diffusion_hmm::graph::{random_connected_topology, second_eigenvalue_magnitude, metropolis_weights};
use diffusion_hmm::sim::{simulate_network, ExperimentConfig, Network};
use diffusion_hmm::filters::StrategySpec;

#[derive(Parser)]
struct Args {
    #[arg(long)]
    agents: usize,
    #[arg(long)]
    rho2: Option<f64>,
    #[arg(long, default_value_t = 0.005)]
    tolerance: f64,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 200)]
    seeds: u64,
    #[arg(long, default_value_t = 10)]
    max_hits: usize,
    /// Monte Carlo runs for the risk estimate of each hit (0 disables it).
    #[arg(long, default_value_t = 0)]
    risk_runs: usize,
    /// Print the edge list of `--density`/`--seed` instead of searching.
    #[arg(long)]
    emit: bool,
}

const BASE: &str = r#"
[experiment]
horizon = 500
seed = 20240601

[chain]
delta = 0.1

[topology]
networks = ["complete:2"]

[strategy.dhmm]
kind = "diffusion"
gamma = "K"
"#;

fn main() -> diffusion_hmm::Result<()> {
    let args = Args::parse();
    let k = args.agents;
    if args.emit {
        let (d, s) = (args.density.expect("--density"), args.seed.expect("--seed"));
        let topo = random_connected_topology(k, d, s)?;
        let rho2 = second_eigenvalue_magnitude(&metropolis_weights::<f64>(&topo)?);
        println!("# random_connected_topology(K={k}, density={d}, seed={s}); Metropolis rho2 = {rho2:.6}");
        print!("{}", topo.to_edge_list());
        return Ok(());
    }
    let target = args.rho2.expect("--rho2 is required when searching");
    let densities: Vec<f64> = match args.density {
        Some(d) => vec![d],
        None => (1..=40).map(|i| f64::from(i) * 0.025).collect(),
    };
    let mut config = ExperimentConfig::from_toml_str(BASE, &[])?;
    config.experiment.runs = args.risk_runs.max(1);
    let scenario = config.scenario()?;
    let settings = diffusion_hmm::sim::RunSettings::from_config(&config);
    let mut hits = 0;
    for &d in &densities {
        for s in 0..args.seeds {
            let Ok(topo) = random_connected_topology(k, d, s) else { continue };
            let net = Network::from_topology(format!("d{d}-s{s}"), topo)?;
            if (net.rho2 - target).abs() > args.tolerance {
                continue;
            }
            let mut line = format!("{d:.3} {s} {:.6}", net.rho2);
            if args.risk_runs > 0 {
                let strategies = [StrategySpec::diffusion("dhmm", k as f64)];
                let out = simulate_network(&scenario, &net, &strategies, &settings)?;
                let a = out.strategies[0].risks.asymptotic;
                line.push_str(&format!(" {:.4} +- {:.4}", a.mean, a.stderr.unwrap_or(0.0)));
            }
            println!("{line}");
            hits += 1;
            if hits >= args.max_hits {
                return Ok(());
            }
        }
    }
    Ok(())
}

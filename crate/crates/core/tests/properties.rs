mod common;

use common::*;
use diffusion_hmm::filters::{
    diffusion_combine, diffusion_step, Belief, DiffusionConfig, FilterBank, InitialBeliefs, LogLikelihoods,
    NetworkBeliefState, StrategySpec,
};
use diffusion_hmm::graph::{metropolis_weights, random_connected_topology, second_eigenvalue_magnitude};
use diffusion_hmm::metrics::{estimate_risks, kl_divergence, ReadoutWindow, RunDivergences};
use diffusion_hmm::models::{sample_observations, sample_trajectory, TransitionModel, TruncatedGaussian};
use diffusion_hmm::sim::run_experiment;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn max_gap(a: &Belief<f64>, b: &Belief<f64>) -> f64 {
    a.probabilities()
        .iter()
        .zip(b.probabilities())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn diffusion_step_stays_on_simplex(seed in any::<u64>(), gamma in 0.01f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = rng.random_range(2..=5);
        let k = rng.random_range(1..=7);
        let t = random_ergodic_transition(h, &mut rng);
        let l: Vec<_> = (0..k).map(|_| random_discrete_likelihood(h, 3, &mut rng)).collect();
        let a = random_combination(k, &mut rng);
        let cfg = DiffusionConfig::new(gamma, &a, &t, &l).unwrap();
        let mut state = NetworkBeliefState::new((0..k).map(|_| random_belief(h, &mut rng)).collect());
        for _ in 0..25 {
            let obs: Vec<usize> = (0..k).map(|_| rng.random_range(0..3)).collect();
            let (next, etas) = diffusion_step(&state, &obs, &cfg).unwrap();
            for b in next.beliefs.iter().chain(&etas) {
                let p = b.probabilities();
                prop_assert!(p.iter().all(|v| *v >= 0.0 && *v <= 1.0));
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
            state = next;
        }
    }

    #[test]
    fn kl_is_nonnegative_and_separates(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = rng.random_range(2..=8);
        let p = random_belief(h, &mut rng);
        let q = random_belief(h, &mut rng);
        prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        prop_assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        if max_gap(&p, &q) > 1e-6 {
            prop_assert!(kl_divergence(&p, &q).unwrap() > 0.0);
        }
    }

    #[test]
    fn combine_keeps_consensus(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = rng.random_range(2..=5);
        let k = rng.random_range(1..=9);
        let a = random_combination(k, &mut rng);
        let b = random_belief(h, &mut rng);
        for out in diffusion_combine(&vec![b.clone(); k], &a).unwrap() {
            prop_assert!(max_gap(&out, &b) <= 1e-12);
        }
    }

    #[test]
    fn combine_is_permutation_equivariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = rng.random_range(2..=5);
        let k = rng.random_range(2..=9);
        let a = random_combination(k, &mut rng);
        let psis: Vec<Belief<f64>> = (0..k).map(|_| random_belief(h, &mut rng)).collect();
        let perm = random_permutation(k, &mut rng);
        let mut moved = psis.clone();
        for (i, p) in psis.iter().enumerate() {
            moved[perm[i]] = p.clone();
        }
        let direct = diffusion_combine(&psis, &a).unwrap();
        let relabeled = diffusion_combine(&moved, &a.permuted(&perm).unwrap()).unwrap();
        for i in 0..k {
            prop_assert!(max_gap(&direct[i], &relabeled[perm[i]]) <= 1e-12);
        }
    }

    #[test]
    fn mixing_rate_ignores_labels(k in 2usize..25, density in 0.05f64..1.0, seed in any::<u64>()) {
        let topo = random_connected_topology(k, density, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let perm = random_permutation(k, &mut rng);
        let r1 = second_eigenvalue_magnitude(&metropolis_weights::<f64>(&topo).unwrap());
        let r2 = second_eigenvalue_magnitude(&metropolis_weights::<f64>(&topo.permuted(&perm).unwrap()).unwrap());
        prop_assert!((r1 - r2).abs() <= 1e-10);
        prop_assert!((0.0..=1.0).contains(&r1));
    }

    #[test]
    fn dobrushin_in_range_and_label_free(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = rng.random_range(2..=6);
        let rows: Vec<Vec<f64>> = (0..h).map(|_| random_simplex(h, 0.0, &mut rng)).collect();
        let t = TransitionModel::new(rows.clone()).unwrap();
        let kappa = t.dobrushin_coefficient();
        prop_assert!((0.0..=1.0).contains(&kappa));
        let perm = random_permutation(h, &mut rng);
        let mut moved = vec![vec![0.0; h]; h];
        for i in 0..h {
            for j in 0..h {
                moved[perm[i]][perm[j]] = rows[i][j];
            }
        }
        let relabeled = TransitionModel::new(moved).unwrap().dobrushin_coefficient();
        prop_assert!((kappa - relabeled).abs() <= 1e-15);
    }

    /// Rescaling an agent's likelihood by a hypothesis-independent factor
    /// leaves every belief unchanged.
    #[test]
    fn likelihood_scale_invariance(seed in any::<u64>(), gamma in 0.1f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = rng.random_range(2..=4);
        let k = rng.random_range(1..=6);
        let t = random_ergodic_transition(h, &mut rng);
        let l: Vec<_> = (0..k).map(|_| random_discrete_likelihood(h, 3, &mut rng)).collect();
        let a = random_combination(k, &mut rng);
        let init = InitialBeliefs::shared(random_belief(h, &mut rng), k);
        let specs = vec![StrategySpec::diffusion("d", gamma), StrategySpec::asl("a", 0.2)];
        let mut plain = FilterBank::new(&t, &l, &a, specs.clone(), &init).unwrap();
        let mut scaled = FilterBank::new(&t, &l, &a, specs, &init).unwrap();
        for _ in 0..15 {
            let rows: Vec<Vec<f64>> = (0..k).map(|_| (0..h).map(|_| -3.0 * rng.random::<f64>()).collect()).collect();
            let shifted: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| {
                    let c = 10.0 * (rng.random::<f64>() - 0.5);
                    r.iter().map(|v| v + c).collect()
                })
                .collect();
            plain.step_log_likelihoods(&LogLikelihoods::from_rows(rows).unwrap()).unwrap();
            scaled.step_log_likelihoods(&LogLikelihoods::from_rows(shifted).unwrap()).unwrap();
        }
        prop_assert!(max_gap(plain.centralized(), scaled.centralized()) <= 1e-10);
        for j in 0..2 {
            for (x, y) in plain.beliefs(j).iter().zip(scaled.beliefs(j)) {
                prop_assert!(max_gap(x, y) <= 1e-10);
            }
        }
    }

    #[test]
    fn risk_estimates_ignore_run_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, k) = (6, 3);
        let runs: Vec<RunDivergences<f64>> = (0..rng.random_range(2..12))
            .map(|_| RunDivergences {
                horizon: n,
                num_agents: k,
                posterior: (0..n * k).map(|_| rng.random::<f64>()).collect(),
                prior: Some((0..n * k).map(|_| rng.random::<f64>()).collect()),
            })
            .collect();
        let mut shuffled = runs.clone();
        let perm = random_permutation(runs.len(), &mut rng);
        for (i, r) in runs.iter().enumerate() {
            shuffled[perm[i]] = r.clone();
        }
        let w = ReadoutWindow { start: 4 };
        let a = estimate_risks(&runs, w).unwrap();
        let b = estimate_risks(&shuffled, w).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * (1.0 + x.abs());
        for (x, y) in a.posterior.iter().zip(&b.posterior) {
            prop_assert!(close(x.mean, y.mean));
            prop_assert!(close(x.stderr.unwrap(), y.stderr.unwrap()));
        }
        prop_assert!(close(a.asymptotic.mean, b.asymptotic.mean));
        prop_assert!(close(a.asymptotic_prior.unwrap().mean, b.asymptotic_prior.unwrap().mean));
    }
}

#[test]
fn centralized_equivalence_on_random_instances() {
    for seed in 1000..1150 {
        let (h, k, gap) = centralized_equivalence_gap(seed, 20);
        assert!(gap <= 1e-9, "seed {seed} (H={h}, K={k}): gap {gap:e}");
    }
}

/// With a static state every agent's belief in it must approach one.
#[test]
fn static_state_is_learned() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let t = TransitionModel::<f64>::identity(2).unwrap();
    let l = vec![TruncatedGaussian::<f64>::benchmark(); 10];
    let a = metropolis_weights(&diffusion_hmm::graph::fixture("reference-k10").unwrap()).unwrap();
    for truth in 0..2 {
        let trajectory = diffusion_hmm::models::StateTrajectory::new(vec![truth; 500], 2).unwrap();
        let mut rngs: Vec<ChaCha8Rng> = (0..10).map(|_| ChaCha8Rng::seed_from_u64(rng.random())).collect();
        let obs = sample_observations(&l, &trajectory, &mut rngs).unwrap();
        let mut bank = FilterBank::new(
            &t,
            &l,
            &a,
            vec![StrategySpec::diffusion("d", 1.0), StrategySpec::diffusion("k", 10.0)],
            &InitialBeliefs::uniform(10, 2),
        )
        .unwrap();
        for row in &obs {
            bank.step(row).unwrap();
        }
        for j in 0..2 {
            for b in bank.beliefs(j) {
                assert!(b.prob(truth) > 0.99, "strategy {j}: belief {}", b.prob(truth));
            }
        }
    }
}

#[test]
fn experiments_replay_exactly() {
    let cfg = shipped_config("fig3.cfg", &["experiment.runs=12", "experiment.horizon=60", "metrics.bound_samples=200"]);
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a, b);
    let c = run_experiment(&shipped_config(
        "fig3.cfg",
        &["experiment.runs=12", "experiment.horizon=60", "metrics.bound_samples=200", "experiment.seed=4"],
    ))
    .unwrap();
    assert_ne!(a.networks[0].data_digest, c.networks[0].data_digest);
}

/// Chain states of disjoint runs are uncorrelated.
#[test]
fn runs_are_independent() {
    let t = TransitionModel::<f64>::binary_symmetric(0.1).unwrap();
    let n = 4000;
    let path = |run: u64| -> Vec<f64> {
        let mut rng = diffusion_hmm::sim::stream(11, run, diffusion_hmm::sim::Purpose::Chain, 0);
        sample_trajectory(&t, n, &mut rng).states().iter().map(|s| *s as f64 * 2.0 - 1.0).collect()
    };
    for run in 0..5 {
        let (x, y) = (path(run), path(run + 100));
        let corr = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        // effective sample size shrinks by (1 + 0.8) / (1 - 0.8) for this chain
        let sigma = (9.0 / n as f64).sqrt();
        assert!(corr.abs() < 3.0 * sigma, "runs {run} and {}: correlation {corr}", run + 100);
    }
}

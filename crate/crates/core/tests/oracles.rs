//! Brute-force simulation checks on small budgets. Full-budget versions run
//! in the acceptance target.

use greeneq::diffusion::DiffusionSpec;
use greeneq::oracles::{
    ks_one_sample, ks_two_sample, mc_policy_value, mc_resolvent, particle_stationary, ParticleConfig, SimConfig,
};
use greeneq::stopping::FirmProblem;
use greeneq::{solve_equilibrium, Error, Market, MarketParams};

fn driftless() -> DiffusionSpec {
    DiffusionSpec::new(0.0, 2f64.sqrt(), 1.0).unwrap()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn driftless_resolvent_within_three_standard_errors() {
    let exact = 1.0 - (-1f64).exp();
    let est = mc_resolvent(&driftless(), |_| 1.0, 1.0, &SimConfig::new(20_000, 0.01, 11)).unwrap();
    assert!(est.z_score(exact) < 3.0, "{est:?} vs {exact}");
    assert_eq!(est.paths, 20_000);
}

#[test]
fn resolvent_vanishes_near_the_absorbing_boundary() {
    let est = mc_resolvent(&driftless(), |_| 1.0, 1e-6, &SimConfig::new(2_000, 0.01, 3)).unwrap();
    assert!(est.mean < 1e-3, "{est:?}");
}

#[test]
fn seeded_runs_are_reproducible_across_thread_counts() {
    let sim = SimConfig::new(5_000, 0.05, 42);
    let run = || mc_resolvent(&driftless(), |z| z.min(3.0), 2.0, &sim).unwrap();
    let one = in_pool(1, run);
    let four = in_pool(4, run);
    assert_eq!(one, four);
    assert_eq!(one, run());
    let other = mc_resolvent(&driftless(), |z| z.min(3.0), 2.0, &SimConfig::new(5_000, 0.05, 43)).unwrap();
    assert_ne!(one.mean, other.mean);
}

#[test]
fn invalid_simulation_settings_are_rejected() {
    let bad_dt = SimConfig::new(100, 0.0, 1);
    assert!(matches!(mc_resolvent(&driftless(), |_| 1.0, 1.0, &bad_dt), Err(Error::Validation(_))));
    let no_paths = SimConfig::new(0, 0.1, 1);
    assert!(matches!(mc_resolvent(&driftless(), |_| 1.0, 1.0, &no_paths), Err(Error::Validation(_))));
    let sim = SimConfig::new(100, 0.1, 1);
    assert!(matches!(mc_resolvent(&driftless(), |_| 1.0, 0.0, &sim), Err(Error::Validation(_))));
}

#[test]
fn policy_value_at_threshold_matches_value_function() {
    let market = Market::new(MarketParams::default()).unwrap();
    let problem = FirmProblem::new(&market, 1.0, 102.0).unwrap();
    let sol = problem.solve_threshold().unwrap();
    let flows = *problem.flows();
    let reward = |b: f64| problem.phi2(b).unwrap().value - problem.cost();
    let z = 30.0;
    let est = mc_policy_value(
        &market.dirty_diffusion(),
        |x| flows.profit_polluting(x),
        reward,
        &[sol.b_star],
        z,
        &SimConfig::new(4_000, 0.1, 5),
    )
    .unwrap();
    assert!(est[0].z_score(sol.value(z).unwrap()) < 3.0, "{:?} vs {}", est[0], sol.value(z).unwrap());
}

#[test]
fn policy_value_above_threshold_is_the_reward() {
    let market = Market::new(MarketParams::default()).unwrap();
    let problem = FirmProblem::new(&market, 1.0, 102.0).unwrap();
    let flows = *problem.flows();
    let reward = |b: f64| problem.phi2(b).unwrap().value - problem.cost();
    let est = mc_policy_value(
        &market.dirty_diffusion(),
        |x| flows.profit_polluting(x),
        reward,
        &[20.0, 40.0],
        25.0,
        &SimConfig::new(1_000, 0.1, 5),
    )
    .unwrap();
    assert_eq!(est[0].mean, reward(20.0));
    assert_eq!(est[0].std_error, 0.0);
    assert!(est[1].std_error > 0.0);
}

#[test]
fn particles_match_the_analytic_density() {
    let market = Market::new(MarketParams::default()).unwrap();
    let eq = solve_equilibrium(&market).unwrap();
    let cfg = ParticleConfig { particles: 40_000, ..ParticleConfig::default() };
    let r = particle_stationary(&market, eq.b_star, &cfg).unwrap();
    assert!(r.ks_distance(|z| eq.density.cdf(z)) < 0.02);
    assert_eq!(r.edges.len(), cfg.bins + 1);
    let integral: f64 = r.density.iter().map(|d| d * (r.edges[1] - r.edges[0])).sum();
    assert!((integral - 1.0).abs() < 1e-12);
}

#[test]
fn fast_death_keeps_particles_near_entry() {
    let p = MarketParams { eta: 20.0, ..MarketParams::default() };
    let market = Market::new(p).unwrap();
    let r =
        particle_stationary(&market, 32.0, &ParticleConfig { particles: 20_000, ..ParticleConfig::default() }).unwrap();
    let near = r.samples.iter().filter(|&&x| (4.0..=31.0).contains(&x)).count();
    assert!(near as f64 > 0.99 * r.samples.len() as f64);
}

#[test]
fn no_entry_gives_an_empty_histogram() {
    let market = Market::new(MarketParams::default()).unwrap();
    let r = particle_stationary(&market, 32.0, &ParticleConfig { particles: 0, ..ParticleConfig::default() }).unwrap();
    assert!(r.samples.is_empty());
    assert!(r.density.iter().all(|&d| d == 0.0));
}

#[test]
fn ks_statistics() {
    let sample: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
    assert!(ks_one_sample(&sample, |x| x) <= 0.5e-3 + 1e-12);
    assert_eq!(ks_two_sample(&sample, &sample), 0.0);
    let shifted: Vec<f64> = sample.iter().map(|x| x + 0.1).collect();
    assert!((ks_two_sample(&sample, &shifted) - 0.1).abs() < 2e-3);
}

//! Brute-force simulation checks, independent of the analytic solvers.
//!
//! Paths of the arithmetic Brownian motion are advanced with exact Gaussian
//! increments; absorption between grid points is detected with the exact
//! Brownian-bridge crossing probability, so the step size affects only the
//! payoff integral, never the absorption time. Every oracle splits its work
//! into fixed-size batches with their own ChaCha stream, so results depend on
//! the seed alone, not on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;

use crate::diffusion::DiffusionSpec;
use crate::error::{Error, Result};
use crate::firm_model::Market;
use crate::stationary::{fundamental_tilde, solve_matching_system, ForwardCoefficients};

const BATCH: usize = 1000;

/// Path count, time step, horizon and seed of a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub paths: usize,
    pub dt: f64,
    /// Simulation stops at this time; `None` means 40 discounting half-lives
    /// (e^{−40} of the discount weight remains).
    pub horizon: Option<f64>,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(paths: usize, dt: f64, seed: u64) -> Self {
        Self { paths, dt, horizon: None, seed }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation(format!("time step must be positive, got {}", self.dt)));
        }
        if self.paths == 0 {
            return Err(Error::Validation("at least one path is required".into()));
        }
        Ok(())
    }

    fn horizon(&self, kill_rate: f64) -> f64 {
        self.horizon.unwrap_or(40.0 / kill_rate)
    }
}

/// Mean and standard error of a Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub paths: usize,
}

impl McEstimate {
    /// |mean − x| in units of the standard error.
    pub fn z_score(&self, x: f64) -> f64 {
        if self.std_error == 0.0 {
            if self.mean == x {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - x).abs() / self.std_error
        }
    }
}

/// Running sums of per-path values for several estimands at once.
#[derive(Debug, Clone)]
struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    n: usize,
}

impl Moments {
    fn new(k: usize) -> Self {
        Self { sum: vec![0.0; k], sum_sq: vec![0.0; k], n: 0 }
    }

    fn push(&mut self, values: &[f64]) {
        for (i, v) in values.iter().enumerate() {
            self.sum[i] += v;
            self.sum_sq[i] += v * v;
        }
        self.n += 1;
    }

    fn merge(mut self, other: &Moments) -> Self {
        for i in 0..self.sum.len() {
            self.sum[i] += other.sum[i];
            self.sum_sq[i] += other.sum_sq[i];
        }
        self.n += other.n;
        self
    }

    fn estimates(&self) -> Vec<McEstimate> {
        let n = self.n as f64;
        (0..self.sum.len())
            .map(|i| {
                let mean = self.sum[i] / n;
                let var = if self.n > 1 { (self.sum_sq[i] / n - mean * mean).max(0.0) * n / (n - 1.0) } else { 0.0 };
                McEstimate { mean, std_error: (var / n).sqrt(), paths: self.n }
            })
            .collect()
    }
}

fn batch_rng(seed: u64, batch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch as u64);
    rng
}

/// Run `per_path` over `paths` paths in seeded batches and combine in order.
fn run_batches<F>(paths: usize, seed: u64, k: usize, per_path: F) -> Vec<McEstimate>
where
    F: Fn(&mut ChaCha8Rng, &mut Vec<f64>) + Sync,
{
    let batches = paths.div_ceil(BATCH);
    let partial: Vec<Moments> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = batch_rng(seed, b);
            let mut m = Moments::new(k);
            let mut out = vec![0.0; k];
            for _ in 0..BATCH.min(paths - b * BATCH) {
                per_path(&mut rng, &mut out);
                m.push(&out);
            }
            m
        })
        .collect();
    partial.iter().fold(Moments::new(k), |acc, m| acc.merge(m)).estimates()
}

/// Probability that a Brownian bridge from x₀ to x₁ over time h with
/// variance rate σ² touches a barrier both endpoints lie strictly beyond.
fn bridge_cross(d0: f64, d1: f64, var_h: f64) -> f64 {
    (-2.0 * d0 * d1 / var_h).exp()
}

/// Weights (w₀, w₁) with ∫₀^h e^{−qs} (p₀ + (p₁ − p₀)s/h) ds = w₀p₀ + w₁p₁.
fn step_weights(q: f64, h: f64) -> (f64, f64) {
    let qh = q * h;
    let a0 = -(-qh).exp_m1() / q;
    // (1 − e^{−qh}(1 + qh)) / (q²h), by series for small qh.
    let a1 = if qh < 1e-4 { h * (0.5 - qh / 3.0 + qh * qh / 8.0) } else { (1.0 - (-qh).exp() * (1.0 + qh)) / (q * qh) };
    (a0 - a1, a1)
}

/// E[∫₀^{γ} e^{−qt} payoff(Z_t) dt] for the process started at z and
/// absorbed at 0, with the payoff interpolated linearly over each step.
pub fn mc_resolvent<F>(spec: &DiffusionSpec, payoff: F, z: f64, sim: &SimConfig) -> Result<McEstimate>
where
    F: Fn(f64) -> f64 + Sync,
{
    spec.validate()?;
    sim.validate()?;
    if !(z > 0.0) {
        return Err(Error::Validation(format!("starting point must be positive, got {z}")));
    }
    let (mu, sigma, q) = (spec.drift, spec.volatility, spec.kill_rate);
    let horizon = sim.horizon(q);
    let steps = (horizon / sim.dt).ceil() as usize;
    let h = horizon / steps as f64;
    let (w0, w1) = step_weights(q, h);
    let (shift, scale, var_h, decay) = (mu * h, sigma * h.sqrt(), sigma * sigma * h, (-q * h).exp());
    let est = run_batches(sim.paths, sim.seed, 1, |rng, out| {
        let (mut x, mut p, mut disc, mut acc) = (z, payoff(z), 1.0, 0.0);
        for _ in 0..steps {
            let n: f64 = rng.sample(StandardNormal);
            let x1 = x + shift + scale * n;
            let u: f64 = rng.random();
            if x1 <= 0.0 || u < bridge_cross(x, x1, var_h) {
                break;
            }
            let p1 = payoff(x1);
            acc += disc * (w0 * p + w1 * p1);
            x = x1;
            p = p1;
            disc *= decay;
        }
        out[0] = acc;
    });
    Ok(est[0])
}

/// Value of investing at the first passage above each threshold:
/// E[∫₀^{τ∧γ} e^{−qt} π₁(Z_t) dt + e^{−qτ} reward(b) 1{τ < γ}], where
/// `reward(b)` is Φ₂(b) − c. All thresholds share the same paths, so their
/// differences carry little noise. A start at or above a threshold pays the
/// reward at once.
pub fn mc_policy_value<F, R>(
    dirty: &DiffusionSpec,
    payoff: F,
    reward: R,
    thresholds: &[f64],
    z: f64,
    sim: &SimConfig,
) -> Result<Vec<McEstimate>>
where
    F: Fn(f64) -> f64 + Sync,
    R: Fn(f64) -> f64,
{
    dirty.validate()?;
    sim.validate()?;
    if !(z > 0.0) {
        return Err(Error::Validation(format!("starting point must be positive, got {z}")));
    }
    if let Some(b) = thresholds.iter().find(|b| !(**b > 0.0)) {
        return Err(Error::Validation(format!("thresholds must be positive, got {b}")));
    }
    let rewards: Vec<f64> = thresholds.iter().map(|&b| reward(b)).collect();
    let k = thresholds.len();
    let (mu, sigma, q) = (dirty.drift, dirty.volatility, dirty.kill_rate);
    let horizon = sim.horizon(q);
    let steps = (horizon / sim.dt).ceil() as usize;
    let h = horizon / steps as f64;
    let (w0, w1) = step_weights(q, h);
    let (shift, scale, var_h, decay) = (mu * h, sigma * h.sqrt(), sigma * sigma * h, (-q * h).exp());
    let mut est = run_batches(sim.paths, sim.seed, k, |rng, out| {
        let mut active: Vec<bool> = thresholds.iter().map(|&b| z < b).collect();
        for i in 0..k {
            out[i] = if active[i] { 0.0 } else { rewards[i] };
        }
        let (mut x, mut p, mut disc, mut acc) = (z, payoff(z), 1.0, 0.0);
        let mut remaining = active.iter().filter(|a| **a).count();
        for _ in 0..steps {
            if remaining == 0 {
                break;
            }
            let n: f64 = rng.sample(StandardNormal);
            let x1 = x + shift + scale * n;
            let (u0, u1): (f64, f64) = (rng.random(), rng.random());
            if x1 <= 0.0 || u0 < bridge_cross(x, x1, var_h) {
                // Absorbed while still polluting: only the flows so far count.
                for i in 0..k {
                    if active[i] {
                        out[i] = acc;
                    }
                }
                remaining = 0;
                break;
            }
            let p1 = payoff(x1);
            let step = disc * (w0 * p + w1 * p1);
            for i in 0..k {
                if !active[i] {
                    continue;
                }
                let b = thresholds[i];
                let hit = if x1 >= b {
                    Some((b - x) / (x1 - x))
                } else if u1 < bridge_cross(b - x, b - x1, var_h) {
                    Some(0.5)
                } else {
                    None
                };
                if let Some(frac) = hit {
                    out[i] = acc + frac * step + disc * (-q * frac * h).exp() * rewards[i];
                    active[i] = false;
                    remaining -= 1;
                }
            }
            acc += step;
            x = x1;
            p = p1;
            disc *= decay;
        }
        if remaining > 0 {
            for i in 0..k {
                if active[i] {
                    out[i] = acc;
                }
            }
        }
    });
    // Thresholds at or below the start are deterministic.
    for (i, &b) in thresholds.iter().enumerate() {
        if z >= b {
            est[i] = McEstimate { mean: rewards[i], std_error: 0.0, paths: sim.paths };
        }
    }
    Ok(est)
}

/// Settings of the particle simulation of the stationary population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleConfig {
    pub particles: usize,
    /// Step of the exact increments; absorption is exact at any step.
    pub dt: f64,
    pub bins: usize,
    pub seed: u64,
    /// Two-sample KS level the two interleaved halves must agree within.
    pub ks_threshold: f64,
}

impl Default for ParticleConfig {
    fn default() -> Self {
        Self { particles: 100_000, dt: 5.0, bins: 200, seed: 7, ks_threshold: 0.02 }
    }
}

/// Normalized histogram of the surviving particles.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleResult {
    /// Bin edges, `bins + 1` points from 0 to b*.
    pub edges: Vec<f64>,
    /// Density in each bin; integrates to 1 unless empty.
    pub density: Vec<f64>,
    /// Sorted survivor positions.
    pub samples: Vec<f64>,
    /// Particles that entered.
    pub entered: usize,
    /// Exact-increment steps simulated in total.
    pub steps: usize,
    /// Two-sample KS distance between even- and odd-indexed particles.
    pub ks_halves: f64,
}

impl ParticleResult {
    /// One-sample KS distance of the survivors to a CDF.
    pub fn ks_distance<C: Fn(f64) -> f64>(&self, cdf: C) -> f64 {
        ks_one_sample(&self.samples, cdf)
    }
}

/// sup |F_n − F| for sorted samples.
pub fn ks_one_sample<C: Fn(f64) -> f64>(sorted: &[f64], cdf: C) -> f64 {
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    })
}

/// sup |F_a − F_b| for two sorted samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Positions of a renewal population at a random instant.
///
/// With constant entry and independent death at rate wη, the stationary
/// density is proportional to ∫₀^∞ e^{−wηa} P(Z_a ∈ dz, not absorbed by a) da,
/// the law of a survivor observed at an age A ~ Exp(wη). Each particle enters
/// uniformly on [z̲, z̄] (stratified), is simulated exactly to its age with
/// absorption at 0 and b*, and contributes its position if it survives.
pub fn particle_stationary(market: &Market, b_star: f64, cfg: &ParticleConfig) -> Result<ParticleResult> {
    let p = market.params();
    if !(b_star > p.z_lo) {
        return Err(Error::Assumption(format!("threshold b* = {b_star} must exceed z_lo = {}", p.z_lo)));
    }
    if !(cfg.dt > 0.0) || cfg.bins == 0 {
        return Err(Error::Validation("particle step must be positive and bins nonzero".into()));
    }
    let death = p.poisson_weight * p.eta;
    let age = Exp::new(death).map_err(|e| Error::Validation(format!("death rate {death}: {e}")))?;
    let (mu, sigma) = (p.mu1, p.sigma1);
    let (lo, hi) = (p.z_lo, p.z_hi.min(b_star));
    let n = cfg.particles;
    let batches = n.div_ceil(BATCH);
    let results: Vec<(Vec<(usize, f64)>, usize)> = (0..batches)
        .into_par_iter()
        .map(|bi| {
            let mut rng = batch_rng(cfg.seed, bi);
            let mut out = Vec::with_capacity(BATCH);
            let mut steps = 0;
            for i in bi * BATCH..((bi + 1) * BATCH).min(n) {
                let u: f64 = rng.random();
                let mut x = lo + (hi - lo) * (i as f64 + u) / n as f64;
                let mut left: f64 = age.sample(&mut rng);
                let alive = loop {
                    if left <= 0.0 {
                        break true;
                    }
                    let h = left.min(cfg.dt);
                    left -= h;
                    steps += 1;
                    let z: f64 = rng.sample(StandardNormal);
                    let x1 = x + mu * h + sigma * h.sqrt() * z;
                    let var_h = sigma * sigma * h;
                    let (u0, u1): (f64, f64) = (rng.random(), rng.random());
                    if x1 <= 0.0 || x1 >= b_star {
                        break false;
                    }
                    if u0 < bridge_cross(x, x1, var_h) || u1 < bridge_cross(b_star - x, b_star - x1, var_h) {
                        break false;
                    }
                    x = x1;
                };
                if alive {
                    out.push((i, x));
                }
            }
            (out, steps)
        })
        .collect();
    let steps = results.iter().map(|r| r.1).sum();
    let mut tagged: Vec<(usize, f64)> = results.into_iter().flat_map(|r| r.0).collect();
    let mut even: Vec<f64> = tagged.iter().filter(|(i, _)| i % 2 == 0).map(|t| t.1).collect();
    let mut odd: Vec<f64> = tagged.iter().filter(|(i, _)| i % 2 == 1).map(|t| t.1).collect();
    even.sort_by(f64::total_cmp);
    odd.sort_by(f64::total_cmp);
    let ks_halves = ks_two_sample(&even, &odd);
    tagged.sort_by(|a, b| a.1.total_cmp(&b.1));
    let samples: Vec<f64> = tagged.into_iter().map(|t| t.1).collect();

    let width = b_star / cfg.bins as f64;
    let edges: Vec<f64> = (0..=cfg.bins).map(|k| k as f64 * width).collect();
    let mut density = vec![0.0; cfg.bins];
    for &x in &samples {
        density[((x / width) as usize).min(cfg.bins - 1)] += 1.0;
    }
    if !samples.is_empty() {
        let norm = samples.len() as f64 * width;
        density.iter_mut().for_each(|d| *d /= norm);
    }
    let result = ParticleResult { edges, density, samples, entered: n, steps, ks_halves };
    if ks_halves > cfg.ks_threshold {
        return Err(Error::Numerical(format!(
            "particle simulation has not converged: KS distance between halves {ks_halves:.4} exceeds {}",
            cfg.ks_threshold
        )));
    }
    Ok(result)
}

/// Density coefficients from a dense solve in the raw normalization
/// ψ̃ = e^{β̃₊z}, φ̃ = e^{β̃₋z}: one (ψ̃, φ̃) pair per piece.
pub fn dense_density_constants(market: &Market, b_star: f64) -> Result<Vec<(f64, f64)>> {
    let p = market.params();
    let coeffs = ForwardCoefficients::from_market(market);
    let pair = fundamental_tilde(&coeffs)?;
    let g = p.poisson_weight / (p.z_hi - p.z_lo) / coeffs.r_coef;
    let breaks: Vec<f64> = if b_star <= p.z_hi { vec![0.0, p.z_lo, b_star] } else { vec![0.0, p.z_lo, p.z_hi, b_star] };
    let sources: Vec<f64> = (0..breaks.len() - 1).map(|i| if i == 1 { g } else { 0.0 }).collect();
    let local = solve_matching_system(&pair, &breaks, &sources)?;
    Ok(local
        .iter()
        .enumerate()
        .map(|(i, (cp, cm))| (cp * (-pair.beta_plus * breaks[i + 1]).exp(), cm * (-pair.beta_minus * breaks[i]).exp()))
        .collect())
}

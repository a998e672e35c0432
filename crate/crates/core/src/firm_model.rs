//! Case-study economics: damage, optimal capital, profit and emission flows.
//!
//! A firm with technology z facing carbon price c_p and cap E_max produces
//! y = D θ z k with isoelastic inverse demand y^{−ε}. Optimizing capital in
//! closed form gives every flow below as a power of
//! x(z) = (1−ε) D θ z / (δ + c_p λ D θ z + r/(1−τ)).

use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionSpec;
use crate::error::{ensure, Result};

/// The full parameter vector. Defaults are the reference calibration.
///
/// `poisson_weight` scales the Poisson-death intensity where it enters the
/// firm's discount rate (r + w·η) and the forward equation of the population
/// (death w·η, entry w·g). The reference tables are reproduced with w = 1/2;
/// w = 1 is the textbook generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketParams {
    pub mu1: f64,
    pub sigma1: f64,
    pub mu2: f64,
    pub sigma2: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub delta: f64,
    pub r: f64,
    pub eta: f64,
    pub c_e: f64,
    pub z_lo: f64,
    pub z_hi: f64,
    pub epsilon: f64,
    pub theta: f64,
    pub lambda: f64,
    pub rho: f64,
    #[serde(alias = "I")]
    pub invest_cost: f64,
    pub kappa: f64,
    pub e_bench: f64,
    pub e_max: f64,
    pub poisson_weight: f64,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self {
            mu1: 0.02,
            sigma1: 0.15,
            mu2: 0.02,
            sigma2: 0.15,
            tau1: 0.3,
            tau2: 0.3,
            delta: 0.1,
            r: 0.05,
            eta: 0.04,
            c_e: 28.6,
            z_lo: 5.0,
            z_hi: 30.0,
            epsilon: 0.5,
            theta: 0.3,
            lambda: 0.05,
            rho: 0.02,
            invest_cost: 100.0,
            kappa: 0.0,
            e_bench: 100.0,
            e_max: 102.0,
            poisson_weight: 0.5,
        }
    }
}

/// Names accepted by [`MarketParams::set`], in declaration order.
pub const PARAM_NAMES: [&str; 21] = [
    "mu1",
    "sigma1",
    "mu2",
    "sigma2",
    "tau1",
    "tau2",
    "delta",
    "r",
    "eta",
    "c_e",
    "z_lo",
    "z_hi",
    "epsilon",
    "theta",
    "lambda",
    "rho",
    "invest_cost",
    "kappa",
    "e_bench",
    "e_max",
    "poisson_weight",
];

impl MarketParams {
    /// Assign a field by name; returns false for an unknown name.
    pub fn set(&mut self, name: &str, value: f64) -> bool {
        let slot = match name {
            "mu1" => &mut self.mu1,
            "sigma1" => &mut self.sigma1,
            "mu2" => &mut self.mu2,
            "sigma2" => &mut self.sigma2,
            "tau1" => &mut self.tau1,
            "tau2" => &mut self.tau2,
            "delta" => &mut self.delta,
            "r" => &mut self.r,
            "eta" => &mut self.eta,
            "c_e" => &mut self.c_e,
            "z_lo" => &mut self.z_lo,
            "z_hi" => &mut self.z_hi,
            "epsilon" => &mut self.epsilon,
            "theta" => &mut self.theta,
            "lambda" => &mut self.lambda,
            "rho" => &mut self.rho,
            "invest_cost" | "I" => &mut self.invest_cost,
            "kappa" => &mut self.kappa,
            "e_bench" => &mut self.e_bench,
            "e_max" => &mut self.e_max,
            "poisson_weight" => &mut self.poisson_weight,
            _ => return false,
        };
        *slot = value;
        true
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        let name = if name == "I" { "invest_cost" } else { name };
        let idx = PARAM_NAMES.iter().position(|n| *n == name)?;
        Some(self.as_array()[idx])
    }

    fn as_array(&self) -> [f64; 21] {
        [
            self.mu1,
            self.sigma1,
            self.mu2,
            self.sigma2,
            self.tau1,
            self.tau2,
            self.delta,
            self.r,
            self.eta,
            self.c_e,
            self.z_lo,
            self.z_hi,
            self.epsilon,
            self.theta,
            self.lambda,
            self.rho,
            self.invest_cost,
            self.kappa,
            self.e_bench,
            self.e_max,
            self.poisson_weight,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.as_array().into_iter().zip(PARAM_NAMES).find(|(v, _)| !v.is_finite());
        ensure(finite.is_none(), || format!("{} must be finite", finite.unwrap().1))?;
        let pos = |v: f64, n: &str| ensure(v > 0.0, || format!("{n} must be positive, got {v}"));
        pos(self.sigma1, "sigma1")?;
        pos(self.sigma2, "sigma2")?;
        pos(self.delta, "delta")?;
        pos(self.r, "r")?;
        pos(self.c_e, "c_e")?;
        pos(self.theta, "theta")?;
        pos(self.lambda, "lambda")?;
        pos(self.invest_cost, "invest_cost")?;
        pos(self.e_bench, "e_bench")?;
        pos(self.e_max, "e_max")?;
        pos(self.poisson_weight, "poisson_weight")?;
        ensure(self.eta > 0.0, || {
            format!("eta must be positive (the stationary density degenerates at 0), got {}", self.eta)
        })?;
        ensure(self.rho >= 0.0, || format!("rho must be nonnegative, got {}", self.rho))?;
        for (v, n) in [(self.tau1, "tau1"), (self.tau2, "tau2")] {
            ensure((0.0..1.0).contains(&v), || format!("{n} must lie in [0, 1), got {v}"))?;
        }
        ensure(self.tau1 >= self.tau2, || format!("tau1 ({}) must be at least tau2 ({})", self.tau1, self.tau2))?;
        ensure(self.epsilon > 0.0 && self.epsilon < 1.0, || {
            format!("epsilon must lie in (0, 1), got {}", self.epsilon)
        })?;
        ensure(self.z_lo > 0.0 && self.z_lo < self.z_hi, || {
            format!("entry interval must satisfy 0 < z_lo < z_hi, got ({}, {})", self.z_lo, self.z_hi)
        })?;
        ensure(self.kappa >= 0.0 && self.kappa < self.invest_cost, || {
            format!("subsidy kappa must lie in [0, I), got {} with I = {}", self.kappa, self.invest_cost)
        })
    }
}

/// Numerical tolerances shared by every stage of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative target of every quadrature.
    pub quadrature_rel: f64,
    /// Relative bracket width at which root searches stop.
    pub root_rel: f64,
    /// Kolmogorov–Smirnov acceptance level for the particle oracle.
    pub ks_threshold: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { quadrature_rel: 1e-9, root_rel: 1e-10, ks_threshold: 0.02 }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        ensure(self.quadrature_rel > 0.0 && self.quadrature_rel < 1e-2, || {
            format!("quadrature_rel must lie in (0, 1e-2), got {}", self.quadrature_rel)
        })?;
        ensure(self.root_rel > 0.0 && self.root_rel < 1e-2, || {
            format!("root_rel must lie in (0, 1e-2), got {}", self.root_rel)
        })?;
        ensure(self.ks_threshold > 0.0 && self.ks_threshold < 1.0, || {
            format!("ks_threshold must lie in (0, 1), got {}", self.ks_threshold)
        })
    }
}

/// Damage function parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DamageSpec {
    pub rho: f64,
    pub e_bench: f64,
}

/// D(E_max) = exp(−ρ(E_max − Ē)).
pub fn damage(d: DamageSpec, e_max: f64) -> f64 {
    (-d.rho * (e_max - d.e_bench)).exp()
}

/// Validated parameters together with solver tolerances. Cheap to copy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Market {
    params: MarketParams,
    tol: Tolerances,
}

impl Market {
    pub fn new(params: MarketParams) -> Result<Self> {
        Self::with_tolerances(params, Tolerances::default())
    }

    pub fn with_tolerances(params: MarketParams, tol: Tolerances) -> Result<Self> {
        params.validate()?;
        tol.validate()?;
        Ok(Self { params, tol })
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    /// The same market under a different emission cap.
    pub fn with_e_max(&self, e_max: f64) -> Result<Self> {
        let mut p = self.params;
        p.e_max = e_max;
        Self::with_tolerances(p, self.tol)
    }

    pub fn damage_spec(&self) -> DamageSpec {
        DamageSpec { rho: self.params.rho, e_bench: self.params.e_bench }
    }

    /// Effective discount rate r + w·η of a firm.
    pub fn discount_rate(&self) -> f64 {
        self.params.r + self.params.poisson_weight * self.params.eta
    }

    pub fn dirty_diffusion(&self) -> DiffusionSpec {
        DiffusionSpec { drift: self.params.mu1, volatility: self.params.sigma1, kill_rate: self.discount_rate() }
    }

    pub fn clean_diffusion(&self) -> DiffusionSpec {
        DiffusionSpec { drift: self.params.mu2, volatility: self.params.sigma2, kill_rate: self.discount_rate() }
    }

    /// Investment cost c = I − κ (independent of z).
    pub fn investment_cost(&self) -> f64 {
        self.params.invest_cost - self.params.kappa
    }

    /// Closed-form flows at a given carbon price and cap.
    pub fn flows(&self, c_p: f64, e_max: f64) -> Flows {
        let p = &self.params;
        let d = damage(self.damage_spec(), e_max);
        Flows {
            scale: d * p.theta,
            one_minus_eps: 1.0 - p.epsilon,
            profit_exp: (1.0 - p.epsilon) / p.epsilon,
            output_exp: 1.0 / p.epsilon,
            dirty_fixed: p.delta + p.r / (1.0 - p.tau1),
            dirty_slope: c_p * p.lambda,
            clean_fixed: p.delta + p.r / (1.0 - p.tau2),
            dirty_margin: (1.0 - p.tau1) * p.epsilon,
            clean_margin: (1.0 - p.tau2) * p.epsilon,
            lambda: p.lambda,
            c_p,
        }
    }

    pub fn capital_demand_polluting(&self, z: f64, c_p: f64, e_max: f64) -> f64 {
        self.flows(c_p, e_max).capital_polluting(z)
    }

    pub fn capital_demand_clean(&self, z: f64, e_max: f64) -> f64 {
        self.flows(0.0, e_max).capital_clean(z)
    }

    pub fn profit_polluting(&self, z: f64, c_p: f64, e_max: f64) -> f64 {
        self.flows(c_p, e_max).profit_polluting(z)
    }

    pub fn profit_clean(&self, z: f64, e_max: f64) -> f64 {
        self.flows(0.0, e_max).profit_clean(z)
    }

    pub fn emissions(&self, z: f64, c_p: f64, e_max: f64) -> f64 {
        self.flows(c_p, e_max).emissions(z)
    }

    /// Supremum of π₁ over z, (1−τ₁)ε((1−ε)/(c_pλ))^{(1−ε)/ε}; infinite at c_p = 0.
    pub fn profit_bound_polluting(&self, c_p: f64) -> f64 {
        let p = &self.params;
        (1.0 - p.tau1) * p.epsilon * ((1.0 - p.epsilon) / (c_p * p.lambda)).powf((1.0 - p.epsilon) / p.epsilon)
    }
}

/// Precomputed constants of the closed-form flows at one (c_p, E_max).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flows {
    scale: f64,
    one_minus_eps: f64,
    profit_exp: f64,
    output_exp: f64,
    dirty_fixed: f64,
    dirty_slope: f64,
    clean_fixed: f64,
    dirty_margin: f64,
    clean_margin: f64,
    lambda: f64,
    c_p: f64,
}

fn pow(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else if e == 2.0 {
        x * x
    } else {
        x.powf(e)
    }
}

impl Flows {
    pub fn carbon_price(&self) -> f64 {
        self.c_p
    }

    /// x(z) for the polluting technology; 0 for z ≤ 0.
    fn x_dirty(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        let s = self.scale * z;
        self.one_minus_eps * s / (self.dirty_fixed + self.dirty_slope * s)
    }

    fn x_clean(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        self.one_minus_eps * self.scale * z / self.clean_fixed
    }

    pub fn profit_polluting(&self, z: f64) -> f64 {
        self.dirty_margin * pow(self.x_dirty(z), self.profit_exp)
    }

    pub fn profit_clean(&self, z: f64) -> f64 {
        self.clean_margin * pow(self.x_clean(z), self.profit_exp)
    }

    /// Output y(z, k₁*) = D θ z k₁*.
    pub fn output_polluting(&self, z: f64) -> f64 {
        pow(self.x_dirty(z), self.output_exp)
    }

    pub fn emissions(&self, z: f64) -> f64 {
        self.lambda * self.output_polluting(z)
    }

    pub fn capital_polluting(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        self.output_polluting(z) / (self.scale * z)
    }

    pub fn capital_clean(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        pow(self.x_clean(z), self.output_exp) / (self.scale * z)
    }
}

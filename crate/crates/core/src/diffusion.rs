//! Killed arithmetic Brownian motion: fundamental solutions, scale and speed
//! densities, Wronskian and the Green kernel of the process absorbed at 0.
//!
//! ψ(z) = e^{β₊z} and φ(z) = e^{β₋z} are normalized to 1 at the origin, so the
//! killed increasing solution is ψ(z,0) = ψ(z) − φ(z). Exponentials of large
//! arguments are only ever formed in combinations whose total exponent is
//! bounded; log-space accessors are provided for callers that need raw values.

use std::sync::Arc;

use crate::error::{ensure, Error, Result};

/// Arithmetic Brownian motion dZ = μ dt + σ dW, discounted (killed) at rate q.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionSpec {
    pub drift: f64,
    pub volatility: f64,
    pub kill_rate: f64,
}

impl DiffusionSpec {
    pub fn new(drift: f64, volatility: f64, kill_rate: f64) -> Result<Self> {
        let spec = Self { drift, volatility, kill_rate };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.drift.is_finite(), || format!("drift must be finite, got {}", self.drift))?;
        ensure(self.volatility > 0.0 && self.volatility.is_finite(), || {
            format!("volatility must be positive, got {}", self.volatility)
        })?;
        ensure(self.kill_rate > 0.0 && self.kill_rate.is_finite(), || {
            format!("kill rate must be positive, got {}", self.kill_rate)
        })
    }

    fn half_var(&self) -> f64 {
        0.5 * self.volatility * self.volatility
    }
}

/// A diffusion with state-dependent coefficients. Accepted by the interface,
/// but fundamental solutions are only available in closed form for the
/// arithmetic case.
#[derive(Clone)]
pub struct GeneralDiffusion {
    pub drift: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub volatility: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub kill_rate: f64,
}

/// Growth and decay exponents of the fundamental solutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalPair {
    pub beta_plus: f64,
    pub beta_minus: f64,
}

impl FundamentalPair {
    pub fn psi(&self, z: f64) -> f64 {
        (self.beta_plus * z).exp()
    }

    pub fn phi(&self, z: f64) -> f64 {
        (self.beta_minus * z).exp()
    }

    pub fn log_psi(&self, z: f64) -> f64 {
        self.beta_plus * z
    }

    pub fn log_phi(&self, z: f64) -> f64 {
        self.beta_minus * z
    }

    /// 1 − e^{(β₋−β₊)z}: the factor with ψ(z,0) = ψ(z)·killed_factor(z).
    pub fn killed_factor(&self, z: f64) -> f64 {
        -((self.beta_minus - self.beta_plus) * z).exp_m1()
    }

    /// ψ(z,0) = ψ(z) − φ(z).
    pub fn psi_killed(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        (self.beta_plus * z).exp() * self.killed_factor(z)
    }

    /// log ψ(z,0); −∞ at z = 0.
    pub fn log_psi_killed(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.beta_plus * z + self.killed_factor(z).ln()
    }

    /// d/dz ψ(z,0) divided by ψ(z): β₊ − β₋e^{(β₋−β₊)z}.
    pub fn psi_killed_slope_ratio(&self, z: f64) -> f64 {
        self.beta_plus - self.beta_minus * ((self.beta_minus - self.beta_plus) * z).exp()
    }

    /// ψ(z,0)/ψ(b,0) for 0 ≤ z ≤ b without overflow.
    pub fn psi_killed_ratio(&self, z: f64, b: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        (self.beta_plus * (z - b)).exp() * self.killed_factor(z) / self.killed_factor(b)
    }

    /// Constant Wronskian of the normalized pair, β₊ − β₋.
    pub fn wronskian(&self) -> f64 {
        self.beta_plus - self.beta_minus
    }
}

/// Roots β₊ > 0 > β₋ of (σ²/2)β² + μβ − q = 0, computed without cancellation.
pub fn fundamental_solutions(spec: &DiffusionSpec) -> Result<FundamentalPair> {
    spec.validate()?;
    let (a, mu, q) = (spec.half_var(), spec.drift, spec.kill_rate);
    let (beta_plus, beta_minus) = stable_quadratic_roots(a, mu, -q);
    Ok(FundamentalPair { beta_plus, beta_minus })
}

/// Fundamental solutions of a state-dependent diffusion would need a numerical
/// boundary-value solve; not provided.
pub fn fundamental_solutions_general(_spec: &GeneralDiffusion) -> Result<FundamentalPair> {
    Err(Error::NotImplemented("fundamental solutions for non-arithmetic diffusions".into()))
}

/// Roots (larger, smaller) of a x² + b x + c = 0 with a > 0, c < 0.
pub(crate) fn stable_quadratic_roots(a: f64, b: f64, c: f64) -> (f64, f64) {
    let d = (b * b - 4.0 * a * c).sqrt();
    if b >= 0.0 {
        let small = (-b - d) / (2.0 * a);
        (c / (a * small), small)
    } else {
        let large = (-b + d) / (2.0 * a);
        (large, c / (a * large))
    }
}

/// S′(z) = exp(−2μz/σ²), anchored so that S′(0) = 1.
pub fn scale_density(spec: &DiffusionSpec, z: f64) -> f64 {
    (-spec.drift * z / spec.half_var()).exp()
}

/// m′(z) = 2/(σ² S′(z)).
pub fn speed_density(spec: &DiffusionSpec, z: f64) -> f64 {
    (spec.drift * z / spec.half_var()).exp() / spec.half_var()
}

/// W = [ψ′φ − φ′ψ]/S′, evaluated from its definition at z = 0.
pub fn wronskian(spec: &DiffusionSpec) -> Result<f64> {
    wronskian_at(spec, 0.0)
}

/// The definitional Wronskian at an arbitrary point, in log-space.
pub fn wronskian_at(spec: &DiffusionSpec, z: f64) -> Result<f64> {
    let p = fundamental_solutions(spec)?;
    let log_s = -spec.drift * z / spec.half_var();
    let log_prod = p.log_psi(z) + p.log_phi(z) - log_s;
    Ok((p.beta_plus - p.beta_minus) * log_prod.exp())
}

/// ψ(z,0) for the normalized pair of the given diffusion.
pub fn psi_killed(spec: &DiffusionSpec, z: f64) -> Result<f64> {
    Ok(fundamental_solutions(spec)?.psi_killed(z))
}

/// Green kernel of the process killed at 0: W⁻¹ φ(max(z,y)) ψ(min(z,y),0).
pub fn green_kernel_killed(spec: &DiffusionSpec, z: f64, y: f64) -> Result<f64> {
    let p = fundamental_solutions(spec)?;
    Ok(green_kernel_with(&p, z, y))
}

pub(crate) fn green_kernel_with(p: &FundamentalPair, z: f64, y: f64) -> f64 {
    let (lo, hi) = if z < y { (z, y) } else { (y, z) };
    if lo <= 0.0 {
        return 0.0;
    }
    (p.log_phi(hi) + p.log_psi(lo)).exp() * p.killed_factor(lo) / p.wronskian()
}

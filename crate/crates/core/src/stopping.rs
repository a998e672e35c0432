//! The single firm's irreversible investment problem.
//!
//! Expected discounted profit flows are resolvents Φ(z) = ∫ G(z,y) π(y) m′(y) dy
//! of the process killed at 0. Investing at z pays Φ₂(z) − c, giving the gain
//! G = Φ₂ − Φ₁ − c. The optimal threshold b* is the unique root above the
//! crossing point z̃ of
//!
//!   A(z) = (−G′(z) ψ(z,0) + G(z) ψ′(z,0)) / S′(z),
//!
//! and the value is v = Φ₁ + G(b*) ψ(z,0)/ψ(b*,0) below b*, Φ₂ − c above.

use crate::diffusion::{fundamental_solutions, DiffusionSpec, FundamentalPair};
use crate::error::{Error, Result};
use crate::firm_model::{Flows, Market};
use crate::quadrature::integrate_panels;
use crate::roots::brent;

/// Kernel attenuation e^{−40} below which far panels of the inner integral
/// are dropped. Exact for nondecreasing payoffs up to a relative 4e−18.
const INNER_CUTOFF: f64 = 40.0;
/// Width of tail panels in units of 1/β₊.
const TAIL_PANEL: f64 = 4.0;
const TAIL_MAX_PANELS: usize = 10_000;

/// A resolvent and its first two derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventValue {
    pub value: f64,
    pub slope: f64,
    pub curvature: f64,
}

/// Evaluates Φ(z) = E[∫₀^{γ} e^{−qt} payoff(Z_t) dt] for the killed process.
pub struct ResolventEvaluator<F> {
    spec: DiffusionSpec,
    pair: FundamentalPair,
    payoff: F,
    rel_tol: f64,
}

impl<F: Fn(f64) -> f64> ResolventEvaluator<F> {
    pub fn new(spec: DiffusionSpec, payoff: F, rel_tol: f64) -> Result<Self> {
        let pair = fundamental_solutions(&spec)?;
        Ok(Self { spec, pair, payoff, rel_tol })
    }

    pub fn pair(&self) -> &FundamentalPair {
        &self.pair
    }

    pub fn value(&self, z: f64) -> Result<f64> {
        Ok(self.eval(z)?.value)
    }

    /// Φ, Φ′ and Φ″ at z. Derivatives act on the kernel factors outside the
    /// integrals; the boundary terms cancel, and Φ″ picks up −2π(z)/σ² from
    /// the Wronskian jump.
    pub fn eval(&self, z: f64) -> Result<ResolventValue> {
        if z <= 0.0 {
            let slope = if z == 0.0 { self.tail(0.0)? * (self.pair.beta_plus - self.pair.beta_minus) } else { 0.0 };
            return Ok(ResolventValue { value: 0.0, slope: slope / self.pair.wronskian(), curvature: 0.0 });
        }
        let (bp, bm) = (self.pair.beta_plus, self.pair.beta_minus);
        let w = self.pair.wronskian();
        let inner = self.inner(z)?;
        let tail = self.tail(z)?;
        let decay = ((bm - bp) * z).exp();
        let half_var = 0.5 * self.spec.volatility * self.spec.volatility;
        Ok(ResolventValue {
            value: (inner + (1.0 - decay) * tail) / w,
            slope: (bm * inner + (bp - bm * decay) * tail) / w,
            curvature: (bm * bm * inner + (bp * bp - bm * bm * decay) * tail) / w - (self.payoff)(z) / half_var,
        })
    }

    /// φ(z)∫₀^z ψ(y,0) π(y) m′(y) dy = (2/σ²)∫₀^z e^{β₋(z−y)}(1 − e^{(β₋−β₊)y}) π(y) dy.
    fn inner(&self, z: f64) -> Result<f64> {
        let (bp, bm) = (self.pair.beta_plus, self.pair.beta_minus);
        let half_var = 0.5 * self.spec.volatility * self.spec.volatility;
        let width = 4.0 / bm.abs();
        let start = (z - INNER_CUTOFF / bm.abs()).max(0.0);
        let mut points = vec![z];
        let mut y = z;
        while y > start {
            y = (y - width).max(start);
            points.push(y);
        }
        points.reverse();
        let f = |y: f64| (bm * (z - y)).exp() * (-((bm - bp) * y).exp_m1()) * (self.payoff)(y);
        Ok(integrate_panels(&f, &points, self.rel_tol)? / half_var)
    }

    /// ψ(z)∫_z^∞ φ(y) π(y) m′(y) dy = (2/σ²)∫₀^∞ e^{−β₊t} π(z+t) dt, truncated
    /// once a geometric-ratio estimate of the remainder is negligible.
    fn tail(&self, z: f64) -> Result<f64> {
        let bp = self.pair.beta_plus;
        let half_var = 0.5 * self.spec.volatility * self.spec.volatility;
        let width = TAIL_PANEL / bp;
        let f = |t: f64| (-bp * t).exp() * (self.payoff)(z + t);
        let mut total = 0.0;
        let mut prev = f64::NAN;
        for k in 0..TAIL_MAX_PANELS {
            let (a, b) = (k as f64 * width, (k + 1) as f64 * width);
            let piece = integrate_panels(&f, &[a, b], self.rel_tol)?;
            total += piece;
            if k >= 1 {
                let target = 1e-2 * self.rel_tol * total.abs();
                if piece == 0.0 && prev == 0.0 {
                    return Ok(total / half_var);
                }
                let ratio = piece.abs() / prev.abs();
                if ratio < 0.9 && piece.abs() * ratio / (1.0 - ratio) <= target {
                    return Ok(total / half_var);
                }
            }
            prev = piece;
        }
        Err(Error::Numerical(format!(
            "resolvent tail at z = {z} not truncated after {TAIL_MAX_PANELS} panels; payoff grows too fast"
        )))
    }
}

/// Φ(z) for an arbitrary payoff at the default relative tolerance 1e−9.
pub fn resolvent<F: Fn(f64) -> f64>(spec: &DiffusionSpec, payoff: F, z: f64) -> Result<f64> {
    ResolventEvaluator::new(*spec, payoff, 1e-9)?.value(z)
}

/// The stopping problem of one firm at a fixed carbon price and cap.
#[derive(Debug, Clone, Copy)]
pub struct FirmProblem {
    market: Market,
    c_p: f64,
    e_max: f64,
    flows: Flows,
    dirty: DiffusionSpec,
    clean: DiffusionSpec,
    dirty_pair: FundamentalPair,
    cost: f64,
}

impl FirmProblem {
    pub fn new(market: &Market, c_p: f64, e_max: f64) -> Result<Self> {
        if !(c_p >= 0.0 && c_p.is_finite()) {
            return Err(Error::Validation(format!("carbon price must be finite and nonnegative, got {c_p}")));
        }
        if !(e_max > 0.0 && e_max.is_finite()) {
            return Err(Error::Validation(format!("emission cap must be positive, got {e_max}")));
        }
        let dirty = market.dirty_diffusion();
        Ok(Self {
            market: *market,
            c_p,
            e_max,
            flows: market.flows(c_p, e_max),
            dirty,
            clean: market.clean_diffusion(),
            dirty_pair: fundamental_solutions(&dirty)?,
            cost: market.investment_cost(),
        })
    }

    pub fn market(&self) -> &Market {
        &self.market
    }

    pub fn carbon_price(&self) -> f64 {
        self.c_p
    }

    pub fn e_max(&self) -> f64 {
        self.e_max
    }

    pub fn flows(&self) -> &Flows {
        &self.flows
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn dirty_pair(&self) -> &FundamentalPair {
        &self.dirty_pair
    }

    fn tol(&self) -> f64 {
        self.market.tolerances().quadrature_rel
    }

    /// Φ₁ under the dirty diffusion and π₁.
    pub fn phi1(&self, z: f64) -> Result<ResolventValue> {
        let flows = self.flows;
        ResolventEvaluator::new(self.dirty, move |y| flows.profit_polluting(y), self.tol())?.eval(z)
    }

    /// Φ₂ under the clean diffusion and π₂.
    pub fn phi2(&self, z: f64) -> Result<ResolventValue> {
        let flows = self.flows;
        ResolventEvaluator::new(self.clean, move |y| flows.profit_clean(y), self.tol())?.eval(z)
    }

    /// G(z) = Φ₂(z) − Φ₁(z) − c.
    pub fn gain(&self, z: f64) -> Result<f64> {
        Ok(self.phi2(z)?.value - self.phi1(z)?.value - self.cost)
    }

    /// (G, G′) with G′ from the analytic kernel derivatives.
    pub fn gain_with_slope(&self, z: f64) -> Result<(f64, f64)> {
        let (p1, p2) = (self.phi1(z)?, self.phi2(z)?);
        Ok((p2.value - p1.value - self.cost, p2.slope - p1.slope))
    }

    /// A(z)·S′(z)/ψ(z): same sign as A, finite for all z.
    pub fn big_a_scaled(&self, z: f64) -> Result<f64> {
        let (g, dg) = self.gain_with_slope(z)?;
        let p = &self.dirty_pair;
        Ok(-dg * p.killed_factor(z) + g * p.psi_killed_slope_ratio(z))
    }

    /// A(z) itself; overflows to ±∞ once e^{−β₋z} exceeds the f64 range.
    pub fn big_a(&self, z: f64) -> Result<f64> {
        Ok(self.big_a_scaled(z)? * (-self.dirty_pair.beta_minus * z).exp())
    }

    /// H(z) = π₁ + (𝓛 − q)[Φ₂ − c] with 𝓛 the dirty generator, using
    /// (𝓛 − q)Φ₂ = (μ₁ − μ₂)Φ₂′ + ½(σ₁² − σ₂²)Φ₂″ − π₂.
    pub fn crossing_function(&self, z: f64) -> Result<f64> {
        let q = self.dirty.kill_rate;
        let dmu = self.dirty.drift - self.clean.drift;
        let dvar = 0.5 * (self.dirty.volatility.powi(2) - self.clean.volatility.powi(2));
        let mut h = self.flows.profit_polluting(z) - self.flows.profit_clean(z) + q * self.cost;
        if dmu != 0.0 || dvar != 0.0 {
            let p2 = self.phi2(z)?;
            h += dmu * p2.slope + dvar * p2.curvature;
        }
        Ok(h)
    }

    /// First point of a geometric scan where A turns positive; the root b*
    /// lies in the preceding cell.
    fn bracket_threshold(&self) -> Result<(f64, f64)> {
        let mut lo = 0.0;
        let mut z = 0.5;
        while z < 1e5 {
            if self.big_a_scaled(z)? > 0.0 {
                return Ok((lo, z));
            }
            lo = z;
            z *= 1.25;
        }
        Err(Error::Assumption(format!(
            "no investment: A(z) stays negative up to z = {lo:.3e} at c_p = {}; firms never switch technology",
            self.c_p
        )))
    }

    /// Scan H on 400 geometric points of (1e−3, 10·b_guess) and return the
    /// refined unique crossing z̃.
    pub fn check_single_crossing(&self) -> Result<f64> {
        let (_, b_guess) = self.bracket_threshold()?;
        let (lo, hi) = (1e-3, 10.0 * b_guess);
        let n = 400;
        let ratio = (hi / lo).powf(1.0 / (n - 1) as f64);
        let grid: Vec<f64> = (0..n).map(|i| lo * ratio.powi(i as i32)).collect();
        let values = grid.iter().map(|&z| self.crossing_function(z)).collect::<Result<Vec<_>>>()?;
        if values[0] <= 0.0 {
            return Err(Error::Assumption(format!(
                "single crossing: H({:.3e}) = {:.3e} is not positive near the origin",
                grid[0], values[0]
            )));
        }
        let changes: Vec<usize> = (1..n).filter(|&i| (values[i] > 0.0) != (values[i - 1] > 0.0)).collect();
        match changes.as_slice() {
            [] => Err(Error::Assumption(format!(
                "single crossing: H stays positive on ({lo:.3e}, {hi:.3e}); no crossing point exists"
            ))),
            [i] => {
                brent(|z| self.crossing_function(z), grid[i - 1], grid[*i], 0.0, self.market.tolerances().root_rel, 200)
            }
            many => {
                let cells: Vec<String> =
                    many.iter().map(|&i| format!("({:.4}, {:.4})", grid[i - 1], grid[i])).collect();
                Err(Error::Assumption(format!(
                    "single crossing: H changes sign {} times, in cells {}",
                    many.len(),
                    cells.join(", ")
                )))
            }
        }
    }

    /// Root of A above z̃, bracketed by a geometric pre-scan and refined by Brent.
    /// Fails with an assumption error when the firm never invests.
    pub fn solve_threshold(&self) -> Result<FirmSolution> {
        let (lo, hi) = self.bracket_threshold()?;
        let rtol = self.market.tolerances().root_rel;
        let b_star = brent(|z| self.big_a_scaled(z), lo, hi, 0.0, rtol, 200)?;
        let z_tilde = self.crossing_below(b_star)?;
        let gain_at_b = self.gain(b_star)?;
        Ok(FirmSolution { b_star, z_tilde, gain_at_b, problem: *self })
    }

    /// Like [`solve_threshold`](Self::solve_threshold), but a firm that never
    /// invests is a valid outcome: b* = ∞ and v = Φ₁. Entry values at low
    /// carbon prices need this branch.
    pub fn solve_policy(&self) -> Result<FirmSolution> {
        match self.bracket_threshold() {
            Ok(_) => self.solve_threshold(),
            Err(Error::Assumption(_)) => {
                Ok(FirmSolution { b_star: f64::INFINITY, z_tilde: f64::INFINITY, gain_at_b: 0.0, problem: *self })
            }
            Err(e) => Err(e),
        }
    }

    /// The crossing point of H inside (0, b*), where it must lie.
    fn crossing_below(&self, b: f64) -> Result<f64> {
        let z0 = 1e-3_f64.min(0.5 * b);
        let (h0, hb) = (self.crossing_function(z0)?, self.crossing_function(b)?);
        if h0 <= 0.0 || hb >= 0.0 {
            return Err(Error::Assumption(format!(
                "single crossing: expected H({z0:.3e}) > 0 > H(b*={b:.4}), got {h0:.3e} and {hb:.3e}"
            )));
        }
        brent(|z| self.crossing_function(z), z0, b, 0.0, self.market.tolerances().root_rel, 200)
    }
}

/// Free functions mirroring the problem methods.
pub fn gain(market: &Market, z: f64, c_p: f64, e_max: f64) -> Result<f64> {
    FirmProblem::new(market, c_p, e_max)?.gain(z)
}

pub fn big_a(market: &Market, z: f64, c_p: f64, e_max: f64) -> Result<f64> {
    FirmProblem::new(market, c_p, e_max)?.big_a(z)
}

pub fn check_single_crossing(market: &Market, c_p: f64, e_max: f64) -> Result<f64> {
    FirmProblem::new(market, c_p, e_max)?.check_single_crossing()
}

pub fn solve_threshold(market: &Market, c_p: f64, e_max: f64) -> Result<FirmSolution> {
    FirmProblem::new(market, c_p, e_max)?.solve_threshold()
}

pub fn value_function(sol: &FirmSolution, z: f64) -> Result<f64> {
    sol.value(z)
}

/// Optimal threshold and value function at one (c_p, E_max).
#[derive(Debug, Clone, Copy)]
pub struct FirmSolution {
    pub b_star: f64,
    pub z_tilde: f64,
    gain_at_b: f64,
    problem: FirmProblem,
}

impl FirmSolution {
    pub fn carbon_price(&self) -> f64 {
        self.problem.c_p
    }

    pub fn e_max(&self) -> f64 {
        self.problem.e_max
    }

    pub fn problem(&self) -> &FirmProblem {
        &self.problem
    }

    /// G(b*), the option payoff at the threshold.
    pub fn gain_at_threshold(&self) -> f64 {
        self.gain_at_b
    }

    pub fn invests_at(&self, z: f64) -> bool {
        z >= self.b_star
    }

    pub fn value(&self, z: f64) -> Result<f64> {
        Ok(self.value_derivs(z)?.value)
    }

    /// v, v′, v″ at z (one-sided at b*: the continuation branch below).
    pub fn value_derivs(&self, z: f64) -> Result<ResolventValue> {
        if z <= 0.0 {
            return Ok(ResolventValue { value: 0.0, slope: 0.0, curvature: 0.0 });
        }
        if z >= self.b_star {
            let p2 = self.problem.phi2(z)?;
            return Ok(ResolventValue { value: p2.value - self.problem.cost, ..p2 });
        }
        if self.b_star.is_infinite() {
            return self.problem.phi1(z);
        }
        let p = &self.problem.dirty_pair;
        let (bp, bm) = (p.beta_plus, p.beta_minus);
        let scale = self.gain_at_b * (bp * (z - self.b_star)).exp() / p.killed_factor(self.b_star);
        let decay = ((bm - bp) * z).exp();
        let p1 = self.problem.phi1(z)?;
        Ok(ResolventValue {
            value: p1.value + scale * (1.0 - decay),
            slope: p1.slope + scale * (bp - bm * decay),
            curvature: p1.curvature + scale * (bp * bp - bm * bm * decay),
        })
    }

    /// Residual (𝓛 − q)v + π₁ of the variational inequality, from analytic
    /// derivatives. Zero in the continuation region, ≤ 0 above b*.
    pub fn generator_residual(&self, z: f64) -> Result<f64> {
        let d = self.value_derivs(z)?;
        let s = self.problem.dirty;
        Ok(0.5 * s.volatility * s.volatility * d.curvature + s.drift * d.slope - s.kill_rate * d.value
            + self.problem.flows.profit_polluting(z))
    }
}

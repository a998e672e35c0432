//! Stationary equilibrium: the carbon price clearing the entry condition,
//! the density of polluting firms, the entry rate meeting the emission cap,
//! and the resulting aggregates.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::firm_model::Market;
use crate::quadrature::integrate_panels;
use crate::roots::brent;
use crate::stationary::{solve_density, Regime, StationaryDensity};
use crate::stopping::{FirmProblem, FirmSolution};

/// Carbon price standing in for c_p → ∞ in the entry-cost bounds.
pub const CP_INFINITY: f64 = 1e3;
/// Companion price for the extrapolated c_p → ∞ entry value (diagnostic only).
pub const CP_INFINITY_CHECK: f64 = 500.0;
const CP_CAP: f64 = 1e6;

/// Aggregates per unit of entry (integrals against f) or in levels (× N*).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregates {
    pub output: f64,
    pub capital: f64,
    pub mass: f64,
    pub emissions: f64,
}

/// A solved stationary equilibrium.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub c_p_star: f64,
    pub b_star: f64,
    pub z_tilde: f64,
    pub e_max: f64,
    pub entry_rate: f64,
    pub turnover: f64,
    pub density: StationaryDensity,
    /// Integrals against the scaled density f.
    pub scaled: Aggregates,
    /// Levels: scaled aggregates times N*. `absolute.emissions` is the realized
    /// emission flow and equals the cap.
    pub absolute: Aggregates,
    pub entry_value: f64,
    pub firm: FirmSolution,
}

impl Equilibrium {
    pub fn regime(&self) -> Regime {
        self.density.regime
    }

    pub fn output(&self) -> f64 {
        self.absolute.output
    }
}

/// Which lower bound on the entry cost applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LowerBound {
    /// b_∞ > z̲: c_e must exceed the limiting entry value as c_p → ∞.
    /// `value` is the entry value at the proxy price (an upper bound on the
    /// limit), `limit_estimate` its extrapolation to c_p = ∞.
    Limit { b_infinity: f64, value: f64, limit_estimate: f64 },
    /// b_∞ ≤ z̲: c_e must exceed the entry value at c̄_p where b(c̄_p) = z̲.
    CapPrice { c_bar: f64, b_infinity: f64, value: f64 },
}

/// Outcome of the entry-cost bound checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryBoundsReport {
    pub value_at_zero: f64,
    pub lower: LowerBound,
    /// ∫v(·;0)ξ − c_e ≥ 0.
    pub upper_margin: f64,
    /// c_e − lower bound > 0.
    pub lower_margin: f64,
}

impl EntryBoundsReport {
    /// Upper end of the carbon-price bracket implied by the bounds, if finite.
    pub fn price_ceiling(&self) -> Option<f64> {
        match self.lower {
            LowerBound::Limit { .. } => None,
            LowerBound::CapPrice { c_bar, .. } => Some(c_bar),
        }
    }
}

/// ∫ v(z) ξ(dz) for ξ uniform on [lo, hi], switching to Φ₂ − c above b*.
pub fn entry_value_of(sol: &FirmSolution, lo: f64, hi: f64) -> Result<f64> {
    if hi == lo {
        return sol.value(lo);
    }
    let rel = sol.problem().market().tolerances().quadrature_rel;
    let f = |z: f64| sol.value(z).unwrap_or(f64::NAN);
    let mut points = vec![lo];
    if sol.b_star > lo && sol.b_star < hi {
        points.push(sol.b_star);
    }
    points.push(hi);
    let total = integrate_panels(&f, &points, rel)?;
    if !total.is_finite() {
        // Surface the underlying error rather than a NaN.
        for w in points.windows(2) {
            sol.value(0.5 * (w[0] + w[1]))?;
        }
        return Err(Error::Numerical("entry value integral is not finite".into()));
    }
    Ok(total / (hi - lo))
}

/// Expected value of a fresh entrant at carbon price `c_p`.
pub fn expected_entry_value(market: &Market, c_p: f64, e_max: f64) -> Result<f64> {
    let sol = FirmProblem::new(market, c_p, e_max)?.solve_policy()?;
    entry_value_of(&sol, market.params().z_lo, market.params().z_hi)
}

/// Memoized threshold solves within one equilibrium computation.
struct FirmCache<'a> {
    market: &'a Market,
    e_max: f64,
    solutions: HashMap<u64, (FirmSolution, f64)>,
}

impl<'a> FirmCache<'a> {
    fn new(market: &'a Market, e_max: f64) -> Self {
        Self { market, e_max, solutions: HashMap::new() }
    }

    fn solve(&mut self, c_p: f64) -> Result<(FirmSolution, f64)> {
        if let Some(hit) = self.solutions.get(&c_p.to_bits()) {
            return Ok(*hit);
        }
        let sol = FirmProblem::new(self.market, c_p, self.e_max)?.solve_policy()?;
        let p = self.market.params();
        let value = entry_value_of(&sol, p.z_lo, p.z_hi)?;
        self.solutions.insert(c_p.to_bits(), (sol, value));
        Ok((sol, value))
    }
}

fn check_bounds_with(cache: &mut FirmCache) -> Result<EntryBoundsReport> {
    let c_e = cache.market.params().c_e;
    let z_lo = cache.market.params().z_lo;
    let (_, value_at_zero) = cache.solve(0.0)?;
    if !(c_e <= value_at_zero) {
        return Err(Error::Assumption(format!(
            "entry-cost bounds: c_e = {c_e} exceeds the entry value at zero carbon price {value_at_zero:.6}"
        )));
    }
    // The entry value decreases in c_p, so exceeding its value at the proxy
    // price is sufficient for exceeding the limit. π₁ decays like 1/c_p, so
    // the limit itself is estimated by Richardson extrapolation in 1/c_p.
    let (sol_inf, value_inf) = cache.solve(CP_INFINITY)?;
    let (_, value_check) = cache.solve(CP_INFINITY_CHECK)?;
    let limit_estimate = 2.0 * value_inf - value_check;
    let b_infinity = sol_inf.b_star;
    let lower = if b_infinity > z_lo {
        LowerBound::Limit { b_infinity, value: value_inf, limit_estimate }
    } else {
        let rtol = cache.market.tolerances().root_rel;
        let mut hi = 1.0;
        while cache.solve(hi)?.0.b_star > z_lo {
            hi *= 2.0;
            if hi > CP_CAP {
                return Err(Error::Numerical("no carbon price brings b below z_lo".into()));
            }
        }
        let c_bar = brent(|c| Ok(cache.solve(c)?.0.b_star - z_lo), 0.0, hi, 0.0, rtol, 200)?;
        let (_, value) = cache.solve(c_bar)?;
        LowerBound::CapPrice { c_bar, b_infinity, value }
    };
    let bound = match lower {
        LowerBound::Limit { value, .. } | LowerBound::CapPrice { value, .. } => value,
    };
    if !(c_e > bound) {
        let which = match lower {
            LowerBound::Limit { .. } => "the entry value at the c_p → ∞ proxy",
            LowerBound::CapPrice { .. } => "the entry value at the price where b(c_p) = z_lo",
        };
        return Err(Error::Assumption(format!("entry-cost bounds: c_e = {c_e} does not exceed {which} ({bound:.6})")));
    }
    Ok(EntryBoundsReport { value_at_zero, lower, upper_margin: value_at_zero - c_e, lower_margin: c_e - bound })
}

/// Verify that an equilibrium carbon price exists for these parameters.
pub fn check_entry_cost_bounds(market: &Market) -> Result<EntryBoundsReport> {
    check_bounds_with(&mut FirmCache::new(market, market.params().e_max))
}

fn solve_price_with(cache: &mut FirmCache, ceiling: Option<f64>) -> Result<f64> {
    let c_e = cache.market.params().c_e;
    let mut hi = 1.0_f64;
    if let Some(c) = ceiling {
        hi = hi.min(c);
    }
    while cache.solve(hi)?.1 >= c_e {
        hi *= 2.0;
        if let Some(c) = ceiling {
            hi = hi.min(c);
            if cache.solve(hi)?.1 >= c_e {
                return Err(Error::Numerical("carbon-price bracket inconsistent with the entry-cost bounds".into()));
            }
        }
        if hi > CP_CAP {
            return Err(Error::Numerical("carbon-price bracket exceeded its cap".into()));
        }
    }
    let lo = if hi > 1.0 { 0.5 * hi } else { 0.0 };
    let rtol = cache.market.tolerances().root_rel;
    let c_p = brent(|c| Ok(cache.solve(c)?.1 - c_e), lo, hi, 1e-14, rtol, 200)?;
    let residual = cache.solve(c_p)?.1 - c_e;
    if residual.abs() > 1e-6 * c_e {
        return Err(Error::Numerical(format!("entry condition residual {residual:.3e} above tolerance")));
    }
    Ok(c_p)
}

/// The carbon price at which the expected entry value equals c_e.
pub fn solve_carbon_price(market: &Market, e_max: f64) -> Result<f64> {
    let market = market.with_e_max(e_max)?;
    let mut cache = FirmCache::new(&market, e_max);
    let report = check_bounds_with(&mut cache)?;
    solve_price_with(&mut cache, report.price_ceiling())
}

/// N* = E_max / ∫ e f.
pub fn entry_rate(density: &StationaryDensity, c_p_star: f64, e_max: f64, market: &Market) -> Result<f64> {
    let flows = market.flows(c_p_star, e_max);
    let emitted = density.integrate_against(|z| flows.emissions(z))?;
    if !(emitted > 0.0) {
        return Err(Error::Assumption("degenerate market: polluting firms emit nothing".into()));
    }
    Ok(e_max / emitted)
}

/// Solve the full equilibrium at the market's own cap.
pub fn solve_equilibrium(market: &Market) -> Result<Equilibrium> {
    let e_max = market.params().e_max;
    let mut cache = FirmCache::new(market, e_max);
    let report = check_bounds_with(&mut cache)?;
    let c_p_star = solve_price_with(&mut cache, report.price_ceiling()).map_err(|e| e.at("carbon price"))?;
    let (firm, entry_value) = cache.solve(c_p_star)?;
    let z_tilde = firm.problem().check_single_crossing().map_err(|e| e.at("firm problem"))?;
    let density = solve_density(firm.b_star, market).map_err(|e| e.at("stationary density"))?;

    let flows = market.flows(c_p_star, e_max);
    let emissions = density.integrate_against(|z| flows.emissions(z))?;
    if !(emissions > 0.0) {
        return Err(Error::Assumption("entry rate: polluting firms emit nothing".into()));
    }
    let entry_rate = e_max / emissions;
    let mass = density.mass();
    let scaled = Aggregates {
        output: density.integrate_against(|z| flows.output_polluting(z))?,
        capital: density.integrate_against(|z| flows.capital_polluting(z))?,
        mass,
        emissions,
    };
    let absolute = Aggregates {
        output: entry_rate * scaled.output,
        capital: entry_rate * scaled.capital,
        mass: entry_rate * scaled.mass,
        emissions: entry_rate * scaled.emissions,
    };
    Ok(Equilibrium {
        c_p_star,
        b_star: firm.b_star,
        z_tilde,
        e_max,
        entry_rate,
        turnover: 1.0 / mass,
        density,
        scaled,
        absolute,
        entry_value,
        firm,
    })
}

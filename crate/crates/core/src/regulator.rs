//! Welfare-maximizing choice of the emission cap.
//!
//! Welfare at cap E is aggregate output net of a capital charge and a convex
//! damage cost, Y − r_w K − Γ E^{1+w}. Because Y = E/λ in every equilibrium,
//! this equals E (1/λ − r_w ∫k f / (λ ∫y f) − Γ E^w), which is the form
//! evaluated. Equilibria do not depend on Γ, so one [`WelfareProblem`] memo
//! serves every Γ tried during calibration.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{solve_equilibrium, Equilibrium};
use crate::error::{ensure, Error, Result};
use crate::firm_model::Market;
use crate::roots::golden_section_max;

/// Capital charge reproducing the reference welfare tables.
pub const DEFAULT_CAPITAL_RATE: f64 = 0.005;
/// Quantum of the equilibrium memo key and of every cap actually solved.
pub const CAP_QUANTUM: f64 = 1e-4;
/// Width below which golden-section refinement of the optimal cap stops.
pub const CAP_TOL: f64 = 1e-3;
/// Calibration stops once |E*(Γ) − target| falls below this.
pub const CALIBRATION_TOL: f64 = 0.05;

/// Damage-cost block of the welfare objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WelfareSpec {
    /// Damage-cost scale Γ.
    pub gamma: f64,
    /// Damage exponent w; the cost is Γ E^{1+w}.
    #[serde(default = "default_w_exp")]
    pub w_exp: f64,
    /// Per-unit charge on aggregate capital. The reference tables are
    /// reproduced with 0.005; setting it to r gives the literal r K term.
    #[serde(default = "default_capital_rate")]
    pub capital_rate: f64,
}

fn default_w_exp() -> f64 {
    1.0
}

fn default_capital_rate() -> f64 {
    DEFAULT_CAPITAL_RATE
}

impl WelfareSpec {
    pub fn new(gamma: f64) -> Self {
        Self { gamma, w_exp: default_w_exp(), capital_rate: default_capital_rate() }
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        Self { gamma, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.gamma > 0.0 && self.gamma.is_finite(), || format!("gamma must be positive, got {}", self.gamma))?;
        ensure(self.w_exp > 0.0 && self.w_exp.is_finite(), || format!("w_exp must be positive, got {}", self.w_exp))?;
        ensure(self.capital_rate >= 0.0 && self.capital_rate.is_finite(), || {
            format!("capital_rate must be nonnegative, got {}", self.capital_rate)
        })
    }
}

/// Interval of caps searched and the size of the coarse bracketing grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapSearch {
    pub lo: f64,
    pub hi: f64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

fn default_grid_points() -> usize {
    61
}

impl CapSearch {
    /// [Ē/2, 2Ē] around the benchmark emission level.
    pub fn around(e_bench: f64) -> Self {
        Self { lo: 0.5 * e_bench, hi: 2.0 * e_bench, grid_points: default_grid_points() }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.lo > 0.0 && self.lo < self.hi && self.hi.is_finite(), || {
            format!("cap search interval must satisfy 0 < lo < hi, got [{}, {}]", self.lo, self.hi)
        })?;
        ensure(self.grid_points >= 5, || format!("cap search needs at least 5 grid points, got {}", self.grid_points))
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.grid_points - 1;
        (0..=n).map(|i| quantize(self.lo + (self.hi - self.lo) * i as f64 / n as f64)).collect()
    }
}

fn quantize(e: f64) -> f64 {
    from_key(cap_key(e))
}

fn cap_key(e: f64) -> i64 {
    (e / CAP_QUANTUM).round() as i64
}

/// Divide rather than multiply so keys map to the shortest decimal.
fn from_key(key: i64) -> f64 {
    key as f64 / (1.0 / CAP_QUANTUM).round()
}

/// E (1/λ − r_w ∫k f / (λ ∫y f) − Γ E^w) from a solved equilibrium.
pub fn welfare_of(eq: &Equilibrium, lambda: f64, spec: &WelfareSpec) -> f64 {
    let e = eq.e_max;
    e * (1.0 / lambda
        - spec.capital_rate * eq.scaled.capital / (lambda * eq.scaled.output)
        - spec.gamma * e.powf(spec.w_exp))
}

/// Y − r_w K − Γ E^{1+w} from the aggregate levels.
pub fn welfare_raw(eq: &Equilibrium, spec: &WelfareSpec) -> f64 {
    eq.absolute.output - spec.capital_rate * eq.absolute.capital - spec.gamma * eq.e_max.powf(1.0 + spec.w_exp)
}

/// One point of a welfare curve; `welfare` is `None` where no equilibrium exists.
#[derive(Debug, Clone, PartialEq)]
pub struct WelfarePoint {
    pub e_max: f64,
    pub welfare: Option<f64>,
}

/// The welfare-maximizing cap and its equilibrium.
#[derive(Debug, Clone)]
pub struct OptimalCap {
    pub e_max_star: f64,
    pub welfare: f64,
    pub equilibrium: Arc<Equilibrium>,
    /// The coarse grid used to bracket the peak.
    pub curve: Vec<WelfarePoint>,
}

/// Outcome of Γ calibration.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub gamma: f64,
    pub optimum: OptimalCap,
    /// (Γ, E*(Γ)) for every Γ evaluated, in order.
    pub trace: Vec<(f64, f64)>,
}

/// Welfare over caps for one market, with equilibria memoized by cap.
pub struct WelfareProblem {
    market: Market,
    memo: Mutex<HashMap<i64, Result<Arc<Equilibrium>>>>,
}

impl WelfareProblem {
    pub fn new(market: Market) -> Self {
        Self { market, memo: Mutex::new(HashMap::new()) }
    }

    pub fn market(&self) -> &Market {
        &self.market
    }

    /// Number of distinct caps solved so far.
    pub fn solves(&self) -> usize {
        self.memo.lock().unwrap().len()
    }

    /// The equilibrium at cap `e_max`, rounded to [`CAP_QUANTUM`].
    pub fn equilibrium_at(&self, e_max: f64) -> Result<Arc<Equilibrium>> {
        let key = cap_key(e_max);
        if let Some(hit) = self.memo.lock().unwrap().get(&key) {
            return hit.clone();
        }
        let solved = self.market.with_e_max(from_key(key)).and_then(|m| solve_equilibrium(&m)).map(Arc::new);
        self.memo.lock().unwrap().entry(key).or_insert(solved).clone()
    }

    pub fn welfare(&self, e_max: f64, spec: &WelfareSpec) -> Result<f64> {
        let eq = self.equilibrium_at(e_max)?;
        Ok(welfare_of(&eq, self.market.params().lambda, spec))
    }

    /// Welfare on the coarse grid, evaluated concurrently on the current
    /// rayon pool; failed equilibria give `None`.
    pub fn curve(&self, search: &CapSearch, spec: &WelfareSpec) -> Vec<WelfarePoint> {
        search
            .grid()
            .into_par_iter()
            .map(|e_max| WelfarePoint { e_max, welfare: self.welfare(e_max, spec).ok() })
            .collect()
    }

    /// Maximize welfare over the cap: bracket the peak on the coarse grid,
    /// refine by golden section, then check unimodality around the optimum.
    pub fn solve_optimal_cap(&self, search: &CapSearch, spec: &WelfareSpec) -> Result<OptimalCap> {
        spec.validate()?;
        search.validate()?;
        let curve = self.curve(search, spec);
        let (best, _) = curve
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.welfare.map(|w| (i, w)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or_else(|| {
                Error::Assumption("welfare: no equilibrium exists anywhere on the cap search interval".into())
            })?;
        let last = curve.len() - 1;
        if best == 0 || best == last {
            let show = |p: &WelfarePoint| p.welfare.map_or("undefined".to_string(), |w| format!("{w:.6}"));
            return Err(Error::Numerical(format!(
                "welfare: no interior maximum on [{}, {}]; welfare at the endpoints is {} and {}",
                search.lo,
                search.hi,
                show(&curve[0]),
                show(&curve[last])
            )));
        }
        let (lo, hi) = (curve[best - 1].e_max, curve[best + 1].e_max);
        let (e_star, _) = golden_section_max(|e| self.welfare(e, spec), lo, hi, CAP_TOL)?;
        let e_star = quantize(e_star);
        let welfare = self.welfare(e_star, spec)?;

        // Five points straddling the optimum must rise then fall.
        let h = 0.25 * (hi - lo) / 2.0;
        let probe: Vec<f64> = [-2.0, -1.0, 0.0, 1.0, 2.0].iter().map(|k| e_star + k * h).collect();
        let values = probe.iter().map(|&e| self.welfare(e, spec)).collect::<Result<Vec<_>>>()?;
        let slack = 1e-9 * welfare.abs();
        if values[0] > values[1] + slack
            || values[1] > values[2] + slack
            || values[3] > values[2] + slack
            || values[4] > values[3] + slack
        {
            return Err(Error::Numerical(format!(
                "welfare is not unimodal around E* = {e_star:.4}: values {values:?} at {probe:?}"
            )));
        }
        Ok(OptimalCap { e_max_star: e_star, welfare, equilibrium: self.equilibrium_at(e_star)?, curve })
    }

    /// Γ such that the welfare-maximizing cap equals `target`, by bisection
    /// on the decreasing map Γ ↦ E*(Γ). The first guess solves the
    /// first-order condition at the target.
    pub fn calibrate_gamma(&self, target: f64, search: &CapSearch, template: &WelfareSpec) -> Result<Calibration> {
        search.validate()?;
        if !(target > search.lo && target < search.hi) {
            return Err(Error::Validation(format!(
                "calibration target {target} lies outside the cap search interval [{}, {}]",
                search.lo, search.hi
            )));
        }
        let w = template.w_exp;
        // B(E) = Y − r_w K without damages; FOC B'(E) = (1+w) Γ E^w.
        let benefit = |e: f64| -> Result<f64> {
            let eq = self.equilibrium_at(e)?;
            Ok(eq.absolute.output - template.capital_rate * eq.absolute.capital)
        };
        let h = 0.5;
        let slope = (benefit(target + h)? - benefit(target - h)?) / (2.0 * h);
        if !(slope > 0.0) {
            return Err(Error::Assumption(format!(
                "calibration: net output does not increase with the cap at {target} (slope {slope:.4e})"
            )));
        }
        let gamma0 = slope / ((1.0 + w) * target.powf(w));

        let mut trace = Vec::new();
        let mut solve = |gamma: f64| -> Result<OptimalCap> {
            let opt = self.solve_optimal_cap(search, &template.with_gamma(gamma))?;
            trace.push((gamma, opt.e_max_star));
            Ok(opt)
        };
        let first = solve(gamma0)?;
        if (first.e_max_star - target).abs() < CALIBRATION_TOL {
            return Ok(Calibration { gamma: gamma0, optimum: first, trace });
        }
        // Bracket: E* above target means Γ is too small.
        let (mut g_lo, mut g_hi) = (gamma0, gamma0);
        let (mut e_lo, mut e_hi) = (first.e_max_star, first.e_max_star);
        let mut step = 1.02;
        while e_lo <= target {
            g_lo /= step;
            e_lo = solve(g_lo)?.e_max_star;
            step *= step;
            if step > 1e6 {
                return Err(Error::Numerical(format!("calibration: no Γ gives E* above {target}")));
            }
        }
        step = 1.02;
        while e_hi >= target {
            g_hi *= step;
            e_hi = solve(g_hi)?.e_max_star;
            step *= step;
            if step > 1e6 {
                return Err(Error::Numerical(format!("calibration: no Γ gives E* below {target}")));
            }
        }
        // Tighten the bracket to the adjacent pair around gamma0.
        if first.e_max_star > target {
            g_lo = gamma0;
            e_lo = first.e_max_star;
        } else {
            g_hi = gamma0;
            e_hi = first.e_max_star;
        }
        for _ in 0..60 {
            let mid = 0.5 * (g_lo + g_hi);
            let opt = solve(mid)?;
            let e = opt.e_max_star;
            if !(e <= e_lo + CAP_TOL && e >= e_hi - CAP_TOL) {
                return Err(Error::Numerical(format!(
                    "calibration: E*(Γ) is not decreasing; E*({mid:.6e}) = {e:.4} outside [{e_hi:.4}, {e_lo:.4}]; trace {trace:?}"
                )));
            }
            if (e - target).abs() < CALIBRATION_TOL {
                return Ok(Calibration { gamma: mid, optimum: opt, trace });
            }
            if e > target {
                g_lo = mid;
                e_lo = e;
            } else {
                g_hi = mid;
                e_hi = e;
            }
        }
        Err(Error::Numerical(format!("calibration did not reach |E* − {target}| < {CALIBRATION_TOL}; trace {trace:?}")))
    }
}

/// Welfare at one cap, solving the equilibrium there.
pub fn welfare(market: &Market, e_max: f64, spec: &WelfareSpec) -> Result<f64> {
    spec.validate()?;
    WelfareProblem::new(*market).welfare(e_max, spec)
}

/// Welfare-maximizing cap for one Γ.
pub fn solve_optimal_cap(market: &Market, spec: &WelfareSpec, search: &CapSearch) -> Result<OptimalCap> {
    WelfareProblem::new(*market).solve_optimal_cap(search, spec)
}

/// Γ placing the welfare-maximizing cap at `target`.
pub fn calibrate_gamma(
    market: &Market,
    target: f64,
    search: &CapSearch,
    template: &WelfareSpec,
) -> Result<Calibration> {
    WelfareProblem::new(*market).calibrate_gamma(target, search, template)
}

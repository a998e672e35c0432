//! Stationary cross-sectional density of polluting firms on (0, b*).
//!
//! The scaled density f solves (σ₁²/2) f″ − μ₁ f′ − η̃ f + g̃ 1_{entry} = 0
//! with f(0) = f(b*) = 0 and C¹ matching at the entry-interval edges, where
//! η̃ = wη and g̃ = w/(z̄ − z̲) for the Poisson weight w. Pieces are exponential
//! plus the constant particular solution g̃/η̃ on the entry interval.
//!
//! Each piece is stored as c⁺ e^{β₊(z − hi)} + c⁻ e^{β₋(z − lo)} + s so both
//! exponentials are at most 1 on their piece. Coefficients come from a dense
//! solve of the matching system and are cross-checked against the printed
//! closed-form constants.

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;
use nalgebra::{DMatrix, DVector};

use crate::diffusion::{stable_quadratic_roots, FundamentalPair};
use crate::error::{Error, Result};
use crate::firm_model::Market;
use crate::quadrature::integrate_panels;

/// Agreement required between the closed-form and linear-solve constants.
pub const CLOSED_FORM_TOL: f64 = 1e-6;

/// Constant coefficients of the forward operator b f″ + a f′ − r f.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardCoefficients {
    pub b_coef: f64,
    pub a_coef: f64,
    pub r_coef: f64,
}

impl ForwardCoefficients {
    /// ABM coefficients of the polluting process with weighted Poisson death.
    pub fn from_market(market: &Market) -> Self {
        let p = market.params();
        Self { b_coef: 0.5 * p.sigma1 * p.sigma1, a_coef: -p.mu1, r_coef: p.poisson_weight * p.eta }
    }
}

/// Roots β̃₊ > 0 > β̃₋ of b β² + a β − r = 0.
pub fn fundamental_tilde(c: &ForwardCoefficients) -> Result<FundamentalPair> {
    if !(c.b_coef > 0.0) {
        return Err(Error::Validation(format!("diffusion coefficient must be positive, got {}", c.b_coef)));
    }
    if !(c.r_coef > 0.0) {
        return Err(Error::Validation(format!(
            "killing coefficient must be positive (degenerate root at 0), got {}",
            c.r_coef
        )));
    }
    let (beta_plus, beta_minus) = stable_quadratic_roots(c.b_coef, c.a_coef, -c.r_coef);
    Ok(FundamentalPair { beta_plus, beta_minus })
}

/// Constant particular solution g/r of (𝓛̃ − r)G + g = 0.
pub fn particular_solution(c: &ForwardCoefficients, g: f64) -> Result<f64> {
    if !(c.r_coef > 0.0) {
        return Err(Error::Validation("no constant particular solution without killing".into()));
    }
    Ok(g / c.r_coef)
}

/// Case I: b* ≤ z̄ (part of the entry interval invests at once); case II: b* > z̄.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    CaseI,
    CaseII,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::CaseI => "I",
            Regime::CaseII => "II",
        })
    }
}

/// One exponential piece of the density on [lo, hi].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    pub source: f64,
}

/// Piecewise-analytic scaled density.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDensity {
    pub regime: Regime,
    pub b_star: f64,
    pub pair: FundamentalPair,
    pub particular: f64,
    pub pieces: Vec<Piece>,
    /// Closed-form constants in the normalization ψ̃ = e^{β̃₊z}, φ̃ = e^{β̃₋z}:
    /// (ψ̃-coefficient, φ̃-coefficient) per piece, i.e. (A₁,A₂),(B₁,B₂) or
    /// (C₁,C₂),(D₁,D₂),(E₁,E₂).
    pub closed_form: Vec<(f64, f64)>,
    /// Largest coefficient discrepancy between the closed form and the
    /// linear solve, relative to the coefficient scale.
    pub closed_form_discrepancy: f64,
    rel_tol: f64,
}

/// Breakpoints {0, z̲, min(z̄, b*), b*} and the regime; b* = z̄ counts as case I.
fn layout(b_star: f64, z_lo: f64, z_hi: f64) -> (Regime, Vec<f64>) {
    if b_star <= z_hi {
        (Regime::CaseI, vec![0.0, z_lo, b_star])
    } else {
        (Regime::CaseII, vec![0.0, z_lo, z_hi, b_star])
    }
}

/// Coefficients (c⁺ᵢ, c⁻ᵢ) solving the boundary and matching conditions.
pub fn solve_matching_system(pair: &FundamentalPair, breaks: &[f64], sources: &[f64]) -> Result<Vec<(f64, f64)>> {
    let n = sources.len();
    let (bp, bm) = (pair.beta_plus, pair.beta_minus);
    let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
    let mut rhs = DVector::<f64>::zeros(2 * n);
    let h = |i: usize| breaks[i + 1] - breaks[i];
    m[(0, 0)] = (-bp * h(0)).exp();
    m[(0, 1)] = 1.0;
    rhs[0] = -sources[0];
    let mut row = 1;
    for i in 0..n - 1 {
        let (gi, gj) = ((bm * h(i)).exp(), (-bp * h(i + 1)).exp());
        m[(row, 2 * i)] = 1.0;
        m[(row, 2 * i + 1)] = gi;
        m[(row, 2 * i + 2)] = -gj;
        m[(row, 2 * i + 3)] = -1.0;
        rhs[row] = sources[i + 1] - sources[i];
        m[(row + 1, 2 * i)] = bp;
        m[(row + 1, 2 * i + 1)] = bm * gi;
        m[(row + 1, 2 * i + 2)] = -bp * gj;
        m[(row + 1, 2 * i + 3)] = -bm;
        row += 2;
    }
    m[(row, 2 * n - 2)] = 1.0;
    m[(row, 2 * n - 1)] = (bm * h(n - 1)).exp();
    rhs[row] = -sources[n - 1];
    let sol = m.lu().solve(&rhs).ok_or_else(|| Error::Numerical("singular density matching system".into()))?;
    Ok((0..n).map(|i| (sol[2 * i], sol[2 * i + 1])).collect())
}

type Big = FBig<HalfEven, 2>;

/// Printed closed-form constants with a constant particular solution,
/// evaluated with ψ̂(z) = e^{β₊(z − b)} (every printed ratio is invariant
/// under rescaling ψ̃, with the ψ̃-coefficients scaling inversely).
///
/// The formulas for the pieces above z̲ subtract terms of size about
/// e^{(β₊ − β₋)b} that cancel to O(1), so they are evaluated in binary
/// floating point with enough extra bits to absorb that cancellation.
fn closed_form_scaled(pair: &FundamentalPair, regime: Regime, b: f64, zl: f64, zh: f64, g: f64) -> Vec<(f64, f64)> {
    let spread = (pair.beta_plus - pair.beta_minus) * b / std::f64::consts::LN_2;
    let bits = 128 + 2 * spread.ceil() as usize;
    let num = |x: f64| Big::try_from(x).expect("finite closed-form input").with_precision(bits).value();
    let (bp, bm) = (num(pair.beta_plus), num(pair.beta_minus));
    let psi = |z: f64| (&bp * num(z - b)).exp();
    let dpsi = |z: f64| &bp * psi(z);
    let phi = |z: f64| (&bm * num(z)).exp();
    let dphi = |z: f64| &bm * phi(z);
    let gv = num(g);
    let dg = num(0.0);
    let out = |v: Vec<(Big, Big)>| v.into_iter().map(|(x, y)| (x.to_f64().value(), y.to_f64().value())).collect();
    match regime {
        Regime::CaseI => {
            let w_lo = dpsi(zl) * phi(zl) - psi(zl) * dphi(zl);
            let d0b = psi(0.0) * phi(b) - psi(b) * phi(0.0);
            let a1 = phi(0.0) * (&gv * (psi(b) * dphi(zl) - dpsi(zl) * phi(b)) + &gv * &w_lo) / (&w_lo * &d0b)
                + phi(0.0) * &dg * (psi(zl) * phi(b) - psi(b) * phi(zl)) / (&w_lo * &d0b);
            let a2 = -(&a1 * psi(0.0)) / phi(0.0);
            let dlb = psi(zl) * phi(b) - psi(b) * phi(zl);
            let cross0 = psi(zl) * phi(0.0) - psi(0.0) * phi(zl);
            let b1 = &a1 * phi(b) * &cross0 / (phi(0.0) * &dlb) + (&gv * phi(zl) - &gv * phi(b)) / &dlb;
            // Sign of the first term corrected: the printed form has +A₁, which
            // violates continuity at z̲.
            let b2 = -(&a1 * psi(b) * &cross0) / (phi(0.0) * &dlb) - (&gv * psi(zl) - &gv * psi(b)) / &dlb;
            out(vec![(a1, a2), (b1, b2)])
        }
        Regime::CaseII => {
            let d0 = psi(b) * phi(0.0) - psi(0.0) * phi(b);
            let w_hi = psi(zh) * dphi(zh) - dpsi(zh) * phi(zh);
            let w_lo = psi(zl) * dphi(zl) - dpsi(zl) * phi(zl);
            let c1 = phi(0.0) * (psi(b) * (&dg * phi(zh) - &gv * dphi(zh)) + phi(b) * (&gv * dpsi(zh) - &dg * psi(zh)))
                / (&d0 * &w_hi)
                - phi(0.0) * (psi(b) * (&dg * phi(zl) - &gv * dphi(zl)) + phi(b) * (&gv * dpsi(zl) - &dg * psi(zl)))
                    / (&d0 * &w_lo);
            let c2 = -(&c1 * psi(0.0)) / phi(0.0);
            let d1 = &c1 + (&dg * phi(zl) - &gv * dphi(zl)) / &w_lo;
            let d2 = -(&c1 * psi(0.0)) / phi(0.0) - (&dg * psi(zl) - &gv * dpsi(zl)) / &w_lo;
            let dhb = psi(zh) * phi(b) - psi(b) * phi(zh);
            let e1 = &c1 * phi(b) * (psi(zh) * phi(0.0) - psi(0.0) * phi(zh)) / (phi(0.0) * &dhb)
                + &gv * phi(b) / &dhb
                + phi(b) * (psi(zh) * (&dg * phi(zl) - &gv * dphi(zl)) - phi(zh) * (&dg * psi(zl) - &gv * dpsi(zl)))
                    / (&dhb * &w_lo);
            let e2 = -(&e1 * psi(b)) / phi(b);
            out(vec![(c1, c2), (d1, d2), (e1, e2)])
        }
    }
}

/// Assemble the density for threshold `b_star`.
pub fn solve_density(b_star: f64, market: &Market) -> Result<StationaryDensity> {
    let p = market.params();
    if !(b_star > p.z_lo) {
        return Err(Error::Assumption(format!(
            "threshold b* = {b_star:.4} does not exceed z_lo = {}: all entrants invest immediately",
            p.z_lo
        )));
    }
    let coeffs = ForwardCoefficients::from_market(market);
    let pair = fundamental_tilde(&coeffs)?;
    let g = p.poisson_weight / (p.z_hi - p.z_lo);
    let particular = particular_solution(&coeffs, g)?;
    let (regime, breaks) = layout(b_star, p.z_lo, p.z_hi);
    let n = breaks.len() - 1;
    let sources: Vec<f64> = (0..n).map(|i| if i == 1 { particular } else { 0.0 }).collect();
    let coefs = solve_matching_system(&pair, &breaks, &sources)?;
    let pieces: Vec<Piece> = (0..n)
        .map(|i| Piece {
            lo: breaks[i],
            hi: breaks[i + 1],
            c_plus: coefs[i].0,
            c_minus: coefs[i].1,
            source: sources[i],
        })
        .collect();

    let scaled = closed_form_scaled(&pair, regime, b_star, p.z_lo, p.z_hi, particular);
    let scale = coefs.iter().fold(particular, |m, c| m.max(c.0.abs()).max(c.1.abs()));
    let mut discrepancy = 0.0f64;
    for (piece, (kp, km)) in pieces.iter().zip(&scaled) {
        let cp = kp * (pair.beta_plus * (piece.hi - b_star)).exp();
        let cm = km * (pair.beta_minus * piece.lo).exp();
        discrepancy = discrepancy.max((cp - piece.c_plus).abs() / scale).max((cm - piece.c_minus).abs() / scale);
    }
    if !(discrepancy <= CLOSED_FORM_TOL) {
        return Err(Error::Numerical(format!(
            "closed-form density constants disagree with the matching system (relative {discrepancy:.3e})"
        )));
    }
    let closed_form = scaled.iter().map(|(kp, km)| (kp * (-pair.beta_plus * b_star).exp(), *km)).collect();

    let density = StationaryDensity {
        regime,
        b_star,
        pair,
        particular,
        pieces,
        closed_form,
        closed_form_discrepancy: discrepancy,
        rel_tol: market.tolerances().quadrature_rel,
    };
    density.verify()?;
    Ok(density)
}

impl StationaryDensity {
    fn piece_at(&self, z: f64) -> Option<&Piece> {
        if !(z > 0.0 && z < self.b_star) {
            return None;
        }
        self.pieces.iter().find(|p| z <= p.hi)
    }

    fn piece_terms(&self, p: &Piece, z: f64) -> (f64, f64) {
        (p.c_plus * (self.pair.beta_plus * (z - p.hi)).exp(), p.c_minus * (self.pair.beta_minus * (z - p.lo)).exp())
    }

    /// f(z); zero outside (0, b*).
    pub fn value(&self, z: f64) -> f64 {
        self.piece_at(z).map_or(0.0, |p| {
            let (u, v) = self.piece_terms(p, z);
            u + v + p.source
        })
    }

    /// (f, f′, f″) from the piece containing z.
    pub fn derivs(&self, z: f64) -> (f64, f64, f64) {
        self.piece_at(z).map_or((0.0, 0.0, 0.0), |p| self.piece_derivs(p, z))
    }

    fn piece_derivs(&self, p: &Piece, z: f64) -> (f64, f64, f64) {
        let (bp, bm) = (self.pair.beta_plus, self.pair.beta_minus);
        let (u, v) = self.piece_terms(p, z);
        (u + v + p.source, bp * u + bm * v, bp * bp * u + bm * bm * v)
    }

    /// Closed-form ∫₀^{b*} f.
    pub fn mass(&self) -> f64 {
        self.cdf_unnormalized(self.b_star)
    }

    /// ∫₀^z f from exact exponential antiderivatives.
    pub fn cdf_unnormalized(&self, z: f64) -> f64 {
        let (bp, bm) = (self.pair.beta_plus, self.pair.beta_minus);
        let mut total = 0.0;
        for p in &self.pieces {
            if z <= p.lo {
                break;
            }
            let x = z.min(p.hi);
            let h = x - p.lo;
            total += p.c_plus * ((bp * (x - p.hi)).exp() - (bp * (p.lo - p.hi)).exp()) / bp
                + p.c_minus * (bm * h).exp_m1() / bm
                + p.source * h;
        }
        total
    }

    /// Normalized CDF of f/∫f.
    pub fn cdf(&self, z: f64) -> f64 {
        self.cdf_unnormalized(z) / self.mass()
    }

    /// ∫₀^{b*} f by adaptive quadrature, independent of the antiderivatives.
    pub fn mass_quadrature(&self) -> Result<f64> {
        self.integrate_against(|_| 1.0)
    }

    /// ∫₀^{b*} h(z) f(z) dz, piece by piece, on panels resolving the boundary layers.
    pub fn integrate_against<H: Fn(f64) -> f64>(&self, h: H) -> Result<f64> {
        let width = 2.0 / self.pair.beta_plus.max(-self.pair.beta_minus);
        let mut total = 0.0;
        for p in &self.pieces {
            let k = ((p.hi - p.lo) / width).ceil().max(1.0) as usize;
            let points: Vec<f64> = (0..=k).map(|j| p.lo + (p.hi - p.lo) * j as f64 / k as f64).collect();
            let f = |z: f64| {
                let (u, v) = self.piece_terms(p, z);
                h(z) * (u + v + p.source)
            };
            total += integrate_panels(&f, &points, self.rel_tol)?;
        }
        Ok(total)
    }

    /// Ordered (z, f(z)) pairs at n equally spaced points of [0, b*].
    pub fn samples(&self, n: usize) -> Vec<(f64, f64)> {
        let n = n.max(2);
        (0..n)
            .map(|i| {
                let z = self.b_star * i as f64 / (n - 1) as f64;
                (z, self.value(z))
            })
            .collect()
    }

    /// Boundary values, C¹ matching, and nonnegativity on a 1000-point grid.
    fn verify(&self) -> Result<()> {
        let scale = self.particular;
        let first = &self.pieces[0];
        let last = self.pieces.last().unwrap();
        let f0 = self.piece_derivs(first, 0.0).0;
        let fb = self.piece_derivs(last, self.b_star).0;
        if f0.abs() > 1e-8 * scale || fb.abs() > 1e-8 * scale {
            return Err(Error::Numerical(format!("density boundary values f(0) = {f0:.3e}, f(b*) = {fb:.3e}")));
        }
        for w in self.pieces.windows(2) {
            let (l, r) = (self.piece_derivs(&w[0], w[0].hi), self.piece_derivs(&w[1], w[1].lo));
            let slope_scale = scale * self.pair.beta_plus.max(-self.pair.beta_minus);
            if (l.0 - r.0).abs() > 1e-8 * scale || (l.1 - r.1).abs() > 1e-8 * slope_scale {
                return Err(Error::Numerical(format!("density matching fails at z = {}", w[0].hi)));
            }
        }
        for i in 1..1000 {
            let z = self.b_star * i as f64 / 1000.0;
            let f = self.value(z);
            if f < -1e-10 * scale {
                return Err(Error::Numerical(format!("negative density f({z:.4}) = {f:.3e}")));
            }
        }
        Ok(())
    }
}

//! Adaptive Gauss–Legendre quadrature.
//!
//! Each panel is integrated with a 10-point rule and with the same rule on its
//! two halves; the difference is the (Richardson) error estimate for the
//! refined value. Panels are bisected until the estimate falls below their
//! share of the global tolerance.

use std::sync::OnceLock;

use crate::error::{Error, Result};

const ORDER: usize = 10;
const MAX_DEPTH: u32 = 40;

fn rule() -> &'static ([f64; ORDER], [f64; ORDER]) {
    static RULE: OnceLock<([f64; ORDER], [f64; ORDER])> = OnceLock::new();
    RULE.get_or_init(gauss_legendre_rule::<ORDER>)
}

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1], by Newton
/// iteration on the Legendre recurrence.
pub fn gauss_legendre_rule<const N: usize>() -> ([f64; N], [f64; N]) {
    let mut nodes = [0.0; N];
    let mut weights = [0.0; N];
    let n = N as f64;
    for i in 0..N.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=N {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[N - 1 - i] = x;
        weights[i] = w;
        weights[N - 1 - i] = w;
    }
    (nodes, weights)
}

/// Fixed 10-point Gauss–Legendre estimate of ∫_a^b f.
pub fn gauss_legendre<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (x, w) = rule();
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let mut s = 0.0;
    for i in 0..ORDER {
        s += w[i] * f(c + h * x[i]);
    }
    s * h
}

/// Adaptive integral of `f` over [a, b] to `max(abs_tol, rel_tol·|I|)`.
///
/// The relative target uses a first estimate of |I| (refined as panels
/// converge), so integrands that are sharply peaked should be split into
/// panels by the caller, see [`integrate_panels`].
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let whole = gauss_legendre(f, a, b);
    let m = 0.5 * (a + b);
    let halves = gauss_legendre(f, a, m) + gauss_legendre(f, m, b);
    let tol = abs_tol.max(rel_tol * halves.abs());
    if (halves - whole).abs() <= tol {
        return Ok(halves);
    }
    adapt(f, a, b, whole, tol, b - a)
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, span: f64) -> Result<f64> {
    // Explicit stack: (a, b, coarse estimate of the panel, depth).
    let mut stack = vec![(a, b, whole, 0u32)];
    let mut total = 0.0;
    while let Some((lo, hi, coarse, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = gauss_legendre(f, lo, mid);
        let right = gauss_legendre(f, mid, hi);
        let fine = left + right;
        if !fine.is_finite() {
            return Err(Error::Numerical(format!("non-finite integrand on [{lo}, {hi}]")));
        }
        let local = tol * (hi - lo) / span;
        if (fine - coarse).abs() <= local.max(f64::EPSILON * fine.abs()) {
            total += fine;
        } else if depth >= MAX_DEPTH {
            return Err(Error::Numerical(format!(
                "adaptive quadrature did not converge on [{lo}, {hi}] (estimate {:.3e})",
                (fine - coarse).abs()
            )));
        } else {
            stack.push((lo, mid, left, depth + 1));
            stack.push((mid, hi, right, depth + 1));
        }
    }
    Ok(total)
}

/// Integrate over consecutive panels `[p_k, p_{k+1}]` with a running relative
/// tolerance: each panel's absolute target is `rel_tol` times the magnitude
/// accumulated so far (or of the panel itself), so panels contributing
/// negligibly are accepted after a single refinement.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: &F, points: &[f64], rel_tol: f64) -> Result<f64> {
    let mut total = 0.0_f64;
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let coarse = gauss_legendre(f, a, b).abs();
        let scale = total.abs().max(coarse);
        total += integrate(f, a, b, rel_tol, rel_tol * scale * 1e-2 + f64::MIN_POSITIVE)?;
    }
    Ok(total)
}

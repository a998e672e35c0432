use greeneq::diffusion::DiffusionSpec;
use greeneq::stopping::{gain, resolvent, solve_threshold, value_function, FirmProblem};
use greeneq::{Error, Market, MarketParams};

// Reference values from an independent scipy implementation (adaptive
// quadrature of the kernel integrals, Brent on A), base market, c_p = 1,
// E_max = 102.
const PHI1_AT_10: f64 = 23.164894146578433;
const PHI2_AT_10: f64 = 43.235524761854506;
const GAIN_AT_50: f64 = 70.93951156520862;
const THRESHOLDS: [(f64, f64); 4] =
    [(0.5, 38.77547118633353), (1.0, 32.78027705174279), (1.5, 30.347493172677016), (2.0, 28.999679271608024)];

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

fn base() -> Market {
    Market::new(MarketParams::default()).unwrap()
}

fn problem(c_p: f64) -> FirmProblem {
    FirmProblem::new(&base(), c_p, 102.0).unwrap()
}

#[test]
fn driftless_unit_payoff_resolvent() {
    let spec = DiffusionSpec::new(0.0, 2f64.sqrt(), 1.0).unwrap();
    assert_eq!(resolvent(&spec, |_| 1.0, 0.0).unwrap(), 0.0);
    for z in [0.1, 1.0, 3.0, 10.0] {
        let v = resolvent(&spec, |_| 1.0, z).unwrap();
        assert!(close(v, 1.0 - (-z).exp(), 1e-8), "z = {z}: {v}");
    }
}

#[test]
fn resolvents_match_reference() {
    let p = problem(1.0);
    assert!(close(p.phi1(10.0).unwrap().value, PHI1_AT_10, 1e-8));
    assert!(close(p.phi2(10.0).unwrap().value, PHI2_AT_10, 1e-8));
    assert_eq!(p.phi1(0.0).unwrap().value, 0.0);
}

#[test]
fn gain_values() {
    let m = base();
    assert!(close(gain(&m, 0.0, 1.0, 102.0).unwrap(), -100.0, 1e-14));
    let g50 = gain(&m, 50.0, 1.0, 102.0).unwrap();
    assert!(g50 > 0.0);
    assert!(close(g50, GAIN_AT_50, 1e-7));
}

#[test]
fn identical_technologies_never_gain() {
    let m = base();
    for z in [0.5, 10.0, 40.0, 120.0] {
        assert!((gain(&m, z, 0.0, 102.0).unwrap() + 100.0).abs() < 1e-6);
    }
}

#[test]
fn a_at_origin_is_minus_cost_times_wronskian() {
    let p = problem(1.0);
    let w = p.dirty_pair().wronskian();
    assert!(close(p.big_a(0.0).unwrap(), -100.0 * w, 1e-12));
}

#[test]
fn crossing_function_near_origin() {
    // Identical diffusions and π₁(0) = π₂(0) = 0 leave H(0⁺) = q·c.
    let p = problem(1.0);
    let q = base().discount_rate();
    assert!(close(p.crossing_function(1e-9).unwrap(), q * 100.0, 1e-6));
}

#[test]
fn single_crossing_at_base() {
    let z_tilde = problem(1.0).check_single_crossing().unwrap();
    assert!(z_tilde > 0.0 && z_tilde < 32.78);
}

#[test]
fn single_crossing_fails_for_identical_technologies() {
    // τ₁ = τ₂ and c_p = 0 make π₁ ≡ π₂, so H = q·c never changes sign.
    let err = problem(0.0).check_single_crossing().unwrap_err();
    assert!(matches!(err, Error::Assumption(_)), "{err}");
}

#[test]
fn thresholds_match_reference() {
    let m = base();
    for (c_p, b) in THRESHOLDS {
        let sol = solve_threshold(&m, c_p, 102.0).unwrap();
        assert!(close(sol.b_star, b, 1e-7), "c_p = {c_p}: {} vs {b}", sol.b_star);
        assert!(sol.z_tilde < sol.b_star);
        assert!(problem(c_p).big_a_scaled(sol.b_star).unwrap().abs() < 1e-6);
    }
}

#[test]
fn thresholds_decrease_in_carbon_price() {
    let m = base();
    let grid = [0.5, 0.75, 1.0, 1.5, 2.0, 3.0];
    let b: Vec<f64> = grid.iter().map(|&c| solve_threshold(&m, c, 102.0).unwrap().b_star).collect();
    assert!(b.windows(2).all(|w| w[1] < w[0]), "{b:?}");
}

#[test]
fn high_carbon_price_threshold_stays_positive() {
    let m = base();
    let b_inf = solve_threshold(&m, 1e3, 102.0).unwrap().b_star;
    let b_half = solve_threshold(&m, 500.0, 102.0).unwrap().b_star;
    assert!(b_inf > 0.0 && b_inf < b_half && b_half < THRESHOLDS[3].1);
}

#[test]
fn a_increases_above_the_crossing() {
    let p = problem(1.0);
    let sol = p.solve_threshold().unwrap();
    let n = 60;
    let mut prev = f64::NEG_INFINITY;
    for i in 0..=n {
        let z = sol.z_tilde + (2.0 * sol.b_star - sol.z_tilde) * i as f64 / n as f64;
        let a = p.big_a(z).unwrap();
        assert!(a > prev, "A not increasing at z = {z}");
        prev = a;
    }
}

#[test]
fn value_function_boundary_and_matching() {
    let sol = problem(1.0).solve_threshold().unwrap();
    assert_eq!(value_function(&sol, 0.0).unwrap(), 0.0);
    let b = sol.b_star;
    let inside = sol.value(b * (1.0 - 1e-13)).unwrap();
    let outside = sol.value(b).unwrap();
    assert!(close(inside, outside, 1e-8));
}

#[test]
fn smooth_fit_at_threshold() {
    let sol = problem(1.0).solve_threshold().unwrap();
    let b = sol.b_star;
    let h = 1e-3;
    let v = |z: f64| sol.value(z).unwrap();
    // Second-order one-sided differences from each side of b*.
    let left = (3.0 * v(b * (1.0 - 1e-15)) - 4.0 * v(b - h) + v(b - 2.0 * h)) / (2.0 * h);
    let right = (-3.0 * v(b) + 4.0 * v(b + h) - v(b + 2.0 * h)) / (2.0 * h);
    assert!(close(left, right, 1e-4), "{left} vs {right}");
    let analytic_left = sol.value_derivs(b * (1.0 - 1e-13)).unwrap().slope;
    let analytic_right = sol.problem().phi2(b).unwrap().slope;
    assert!(close(analytic_left, analytic_right, 1e-6));
}

#[test]
fn variational_inequality_holds() {
    let sol = problem(1.0).solve_threshold().unwrap();
    let b = sol.b_star;
    let scale = 3.5;
    for i in 1..100 {
        let z = b * i as f64 / 100.0;
        let res = sol.generator_residual(z).unwrap();
        assert!(res.abs() < 1e-6 * scale, "continuation residual {res} at z = {z}");
        let stop = sol.generator_residual(b + b * i as f64 / 100.0).unwrap();
        assert!(stop <= 1e-9, "stopping residual {stop} at z = {}", b + b * i as f64 / 100.0);
    }
}

#[test]
fn value_dominates_immediate_investment() {
    let sol = problem(1.0).solve_threshold().unwrap();
    let p = *sol.problem();
    for i in 1..50 {
        let z = sol.b_star * i as f64 / 50.0;
        let stop = p.phi2(z).unwrap().value - p.cost();
        assert!(sol.value(z).unwrap() >= stop - 1e-9);
    }
}

#[test]
fn value_decreases_in_carbon_price() {
    let sols: Vec<_> = [0.5, 1.0, 1.5, 2.0].iter().map(|&c| problem(c).solve_threshold().unwrap()).collect();
    for z in [2.0, 10.0, 20.0, 29.0, 35.0, 45.0] {
        let v: Vec<f64> = sols.iter().map(|s| s.value(z).unwrap()).collect();
        for (w, s) in v.windows(2).zip(sols.windows(2)) {
            if z >= s[0].b_star {
                // Both firms already invested: the value no longer depends on c_p.
                assert!(close(w[0], w[1], 1e-12));
            } else {
                assert!(w[1] < w[0], "z = {z}: {v:?}");
            }
        }
    }
}

#[test]
fn never_investing_is_a_valid_policy_only_when_requested() {
    let p = problem(0.0);
    assert!(matches!(p.solve_threshold(), Err(Error::Assumption(_))));
    let sol = p.solve_policy().unwrap();
    assert!(sol.b_star.is_infinite());
    assert!(close(sol.value(12.0).unwrap(), p.phi1(12.0).unwrap().value, 1e-15));
}

#[test]
fn invalid_carbon_price_is_rejected() {
    assert!(matches!(FirmProblem::new(&base(), -1.0, 102.0), Err(Error::Validation(_))));
}

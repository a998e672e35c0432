use greeneq::equilibrium::{
    check_entry_cost_bounds, entry_rate, entry_value_of, expected_entry_value, solve_carbon_price, LowerBound,
};
use greeneq::stationary::Regime;
use greeneq::stopping::solve_threshold;
use greeneq::{solve_equilibrium, Equilibrium, Error, Market, MarketParams};

// Reference values from an independent scipy implementation of the firm
// problem (kernel quadrature, Brent on A, Gauss–Legendre entry integral) and a
// finite-difference solve of the forward equation.
const ENTRY_VALUE_AT_1: f64 = 28.619653435689067;
const ENTRY_VALUE_AT_0: f64 = 74.76142823375655;
const BASE_C_P: f64 = 1.0011558059369792;
const BASE_B: f64 = 32.772347244038;
const BASE_ENTRY_RATE_FD: f64 = 2.35145934642356;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

fn market_with(overrides: &[(&str, f64)]) -> Market {
    let mut p = MarketParams::default();
    for (k, v) in overrides {
        assert!(p.set(k, *v));
    }
    Market::new(p).unwrap()
}

fn solve_with(overrides: &[(&str, f64)]) -> Equilibrium {
    solve_equilibrium(&market_with(overrides)).unwrap()
}

#[test]
fn entry_values_match_reference() {
    let m = market_with(&[]);
    assert!(close(expected_entry_value(&m, 1.0, 102.0).unwrap(), ENTRY_VALUE_AT_1, 1e-7));
    assert!(close(expected_entry_value(&m, 0.0, 102.0).unwrap(), ENTRY_VALUE_AT_0, 1e-7));
}

#[test]
fn entry_value_reproduces_the_calibrated_entry_cost() {
    // The entry cost 28.6 is calibrated so that c_p* = 1.
    let v = expected_entry_value(&market_with(&[]), 1.0, 102.0).unwrap();
    assert!((v - 28.6).abs() < 0.05, "{v}");
}

#[test]
fn entry_value_decreases_in_carbon_price() {
    let m = market_with(&[]);
    let v: Vec<f64> = [0.0, 0.5, 1.0, 2.0].iter().map(|&c| expected_entry_value(&m, c, 102.0).unwrap()).collect();
    assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");
}

#[test]
fn point_mass_entry_is_the_value_at_that_point() {
    let sol = solve_threshold(&market_with(&[]), 1.0, 102.0).unwrap();
    assert_eq!(entry_value_of(&sol, 12.0, 12.0).unwrap(), sol.value(12.0).unwrap());
}

#[test]
fn base_bounds_hold() {
    let report = check_entry_cost_bounds(&market_with(&[])).unwrap();
    assert!(report.upper_margin > 0.0 && report.lower_margin > 0.0);
    assert!(close(report.value_at_zero, ENTRY_VALUE_AT_0, 1e-7));
    match report.lower {
        LowerBound::Limit { b_infinity, value, limit_estimate } => {
            assert!(b_infinity > 5.0);
            assert!(limit_estimate <= value && value < 28.6);
        }
        other => panic!("expected the c_p → ∞ branch, got {other:?}"),
    }
}

#[test]
fn cap_price_branch_when_threshold_limit_is_below_entry() {
    let m = market_with(&[("z_lo", 25.0), ("z_hi", 50.0)]);
    let b_inf = solve_threshold(&m, 1e3, 102.0).unwrap().b_star;
    assert!(b_inf <= 25.0, "b_∞ = {b_inf}");
    match check_entry_cost_bounds(&m) {
        Ok(report) => match report.lower {
            LowerBound::CapPrice { c_bar, .. } => {
                let b = solve_threshold(&m, c_bar, 102.0).unwrap().b_star;
                assert!(close(b, 25.0, 1e-8));
            }
            other => panic!("expected the c̄_p branch, got {other:?}"),
        },
        Err(Error::Assumption(msg)) => assert!(msg.contains("b(c_p) = z_lo"), "{msg}"),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn huge_entry_cost_violates_the_upper_bound() {
    let err = check_entry_cost_bounds(&market_with(&[("c_e", 1e6)])).unwrap_err();
    assert!(matches!(&err, Error::Assumption(m) if m.contains("zero carbon price")), "{err}");
    assert!(matches!(solve_equilibrium(&market_with(&[("c_e", 1e6)])), Err(Error::Assumption(_))));
}

#[test]
fn tiny_entry_cost_violates_the_lower_bound() {
    let err = check_entry_cost_bounds(&market_with(&[("c_e", 1e-6)])).unwrap_err();
    assert!(matches!(&err, Error::Assumption(m) if m.contains("does not exceed")), "{err}");
    let p = MarketParams { c_e: 0.0, ..MarketParams::default() };
    assert!(matches!(Market::new(p), Err(Error::Validation(_))));
}

#[test]
fn base_equilibrium_matches_reference() {
    let eq = solve_with(&[]);
    assert!(close(eq.c_p_star, BASE_C_P, 1e-7), "{}", eq.c_p_star);
    assert!(close(eq.b_star, BASE_B, 1e-7), "{}", eq.b_star);
    assert!(close(eq.entry_rate, BASE_ENTRY_RATE_FD, 2e-5), "{}", eq.entry_rate);
    assert_eq!(eq.regime(), Regime::CaseII);
    assert!(eq.z_tilde > 0.0 && eq.z_tilde < eq.b_star);
    assert!(close(solve_carbon_price(&market_with(&[]), 102.0).unwrap(), eq.c_p_star, 1e-12));
}

#[test]
fn equilibrium_closure() {
    for overrides in [&[][..], &[("tau2", 0.25)][..], &[("e_max", 100.0)][..]] {
        let eq = solve_with(overrides);
        let p = *market_with(overrides).params();
        assert!(close(eq.absolute.emissions, p.e_max, 1e-6));
        assert!(close(eq.entry_value, p.c_e, 1e-6));
        assert!(close(eq.turnover, 1.0 / eq.density.mass(), 1e-14));
        assert!(close(eq.turnover, eq.entry_rate / eq.absolute.mass, 1e-12));
        assert!(close(eq.output(), p.e_max / p.lambda, 1e-6));
    }
}

#[test]
fn entry_rate_is_inverse_in_density() {
    let m = market_with(&[]);
    let eq = solve_equilibrium(&m).unwrap();
    let mut doubled = eq.density.clone();
    for piece in &mut doubled.pieces {
        piece.c_plus *= 2.0;
        piece.c_minus *= 2.0;
        piece.source *= 2.0;
    }
    let n = entry_rate(&eq.density, eq.c_p_star, 102.0, &m).unwrap();
    let n2 = entry_rate(&doubled, eq.c_p_star, 102.0, &m).unwrap();
    assert!(close(n, eq.entry_rate, 1e-14));
    assert!(close(n2, 0.5 * n, 1e-12));
}

#[test]
fn entry_rate_halves_when_emissions_double() {
    // Doubling λ at fixed c_p·λ leaves every flow but emissions unchanged.
    let m = market_with(&[]);
    let eq = solve_equilibrium(&m).unwrap();
    let m2 = market_with(&[("lambda", 0.1)]);
    let n2 = entry_rate(&eq.density, 0.5 * eq.c_p_star, 102.0, &m2).unwrap();
    assert!(close(n2, 0.5 * eq.entry_rate, 1e-9));
}

#[test]
fn comparative_statics_signs() {
    let base = solve_with(&[]);
    assert!(solve_with(&[("tau1", 0.32)]).c_p_star < base.c_p_star);
    let e100 = solve_with(&[("e_max", 100.0)]);
    let e105 = solve_with(&[("e_max", 105.0)]);
    assert!(e105.c_p_star < base.c_p_star && base.c_p_star < e100.c_p_star);
    assert!(e105.output() > base.output() && base.output() > e100.output());
    assert!(solve_with(&[("c_e", 30.0)]).b_star > base.b_star && solve_with(&[("c_e", 27.0)]).b_star < base.b_star);
    assert!(solve_with(&[("kappa", 10.0)]).b_star < base.b_star);
    assert!(solve_with(&[("lambda", 0.051)]).output() < base.output());
}

#[test]
fn case_one_equilibrium_is_detected() {
    let eq = solve_with(&[("tau2", 0.25)]);
    assert_eq!(eq.regime(), Regime::CaseI);
    assert!(eq.b_star < 30.0);
}

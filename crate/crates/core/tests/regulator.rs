use std::sync::Arc;

use greeneq::regulator::{
    calibrate_gamma, solve_optimal_cap, welfare, welfare_of, welfare_raw, CapSearch, WelfareProblem, WelfareSpec,
};
use greeneq::{solve_equilibrium, Error, Market, MarketParams};
use proptest::prelude::*;

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

/// A window around the reference optimum, small enough for quick tests.
fn narrow() -> CapSearch {
    CapSearch { lo: 95.0, hi: 108.0, grid_points: 27 }
}

#[test]
fn default_search_interval() {
    let s = CapSearch::around(100.0);
    assert_eq!((s.lo, s.hi, s.grid_points), (50.0, 200.0, 61));
    let grid = s.grid();
    assert_eq!(grid.len(), 61);
    assert_eq!(grid[1], 52.5);
    assert_eq!(grid[60], 200.0);
}

#[test]
fn invalid_specs_and_searches_are_rejected() {
    assert!(matches!(WelfareSpec::new(0.0).validate(), Err(Error::Validation(_))));
    assert!(matches!(WelfareSpec { w_exp: -1.0, ..WelfareSpec::new(0.1) }.validate(), Err(Error::Validation(_))));
    assert!(matches!(CapSearch { lo: 0.0, hi: 1.0, grid_points: 10 }.validate(), Err(Error::Validation(_))));
    assert!(matches!(CapSearch { lo: 2.0, hi: 1.0, grid_points: 10 }.validate(), Err(Error::Validation(_))));
    assert!(matches!(CapSearch { lo: 1.0, hi: 2.0, grid_points: 3 }.validate(), Err(Error::Validation(_))));
}

#[test]
fn reduced_and_raw_welfare_agree_at_base() {
    let eq = solve_equilibrium(&market_with(&[])).unwrap();
    for spec in [WelfareSpec::new(0.0985), WelfareSpec { capital_rate: 0.05, ..WelfareSpec::new(0.5) }] {
        assert!(close(welfare_of(&eq, 0.05, &spec), welfare_raw(&eq, &spec), 1e-8));
    }
}

#[test]
fn prohibitive_damages_make_welfare_negative() {
    let m = market_with(&[]);
    for e in [96.0, 102.0, 107.0] {
        assert!(welfare(&m, e, &WelfareSpec::new(1e3)).unwrap() < 0.0);
    }
}

#[test]
fn equilibria_are_memoized_by_quantized_cap() {
    let problem = WelfareProblem::new(market_with(&[]));
    let a = problem.equilibrium_at(102.0).unwrap();
    let solves = problem.solves();
    let b = problem.equilibrium_at(102.00001).unwrap();
    assert!(Arc::ptr_eq(&a, &b));
    assert_eq!(problem.solves(), solves);
    let w1 = problem.welfare(102.0, &WelfareSpec::new(0.0985)).unwrap();
    let w2 = problem.welfare(102.0, &WelfareSpec::new(0.0990)).unwrap();
    assert_eq!(problem.solves(), solves);
    assert!(w2 < w1);
}

#[test]
fn boundary_maximum_is_reported() {
    let err = solve_optimal_cap(&market_with(&[]), &WelfareSpec::new(1e-6), &narrow()).unwrap_err();
    match err {
        Error::Numerical(msg) => assert!(msg.contains("no interior maximum") && msg.contains("endpoints"), "{msg}"),
        other => panic!("{other}"),
    }
}

#[test]
fn optimum_is_interior_and_locally_maximal() {
    let problem = WelfareProblem::new(market_with(&[]));
    let spec = WelfareSpec::new(0.0985);
    let opt = problem.solve_optimal_cap(&narrow(), &spec).unwrap();
    assert!(opt.e_max_star > narrow().lo && opt.e_max_star < narrow().hi);
    assert_eq!(opt.curve.len(), 27);
    for p in &opt.curve {
        assert!(p.welfare.unwrap() <= opt.welfare + 1e-9);
    }
    for d in [-0.01, 0.01] {
        assert!(problem.welfare(opt.e_max_star + d, &spec).unwrap() <= opt.welfare + 1e-9);
    }
    assert_eq!(opt.equilibrium.e_max, opt.e_max_star);
}

#[test]
fn higher_damages_tighten_the_cap() {
    let problem = WelfareProblem::new(market_with(&[]));
    let low = problem.solve_optimal_cap(&narrow(), &WelfareSpec::new(0.0985)).unwrap();
    let high = problem.solve_optimal_cap(&narrow(), &WelfareSpec::new(0.0990)).unwrap();
    assert!(high.e_max_star < low.e_max_star);
    assert!(high.equilibrium.c_p_star > low.equilibrium.c_p_star);
    assert!(high.equilibrium.b_star < low.equilibrium.b_star);
}

#[test]
fn higher_marginal_damage_lowers_welfare() {
    let spec = WelfareSpec::new(0.0985);
    let w: Vec<f64> = [0.01, 0.02, 0.03]
        .iter()
        .map(|&rho| solve_optimal_cap(&market_with(&[("rho", rho)]), &spec, &narrow()).unwrap().welfare)
        .collect();
    assert!(w.windows(2).all(|p| p[1] < p[0]), "{w:?}");
}

#[test]
fn calibration_round_trip() {
    let m = market_with(&[]);
    let template = WelfareSpec::new(1.0);
    let target = solve_optimal_cap(&m, &template.with_gamma(0.0985), &narrow()).unwrap().e_max_star;
    let cal = calibrate_gamma(&m, target, &narrow(), &template).unwrap();
    assert!((cal.optimum.e_max_star - target).abs() < 0.05);
    assert!((cal.gamma - 0.0985).abs() < 1e-4, "{}", cal.gamma);
    assert!(!cal.trace.is_empty());
}

#[test]
fn calibration_target_outside_search_is_rejected() {
    let err = calibrate_gamma(&market_with(&[]), 300.0, &narrow(), &WelfareSpec::new(1.0)).unwrap_err();
    assert!(matches!(err, Error::Validation(_)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn reduced_and_raw_welfare_agree(e_max in 90.0f64..115.0, gamma in 0.01f64..0.2, capital_rate in 0.0f64..0.1) {
        let m = market_with(&[]).with_e_max(e_max).unwrap();
        let eq = solve_equilibrium(&m).unwrap();
        let spec = WelfareSpec { gamma, w_exp: 1.0, capital_rate };
        prop_assert!(close(welfare_of(&eq, 0.05, &spec), welfare_raw(&eq, &spec), 1e-8));
    }
}

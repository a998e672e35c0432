use greeneq::diffusion::{
    fundamental_solutions, fundamental_solutions_general, green_kernel_killed, psi_killed, scale_density,
    speed_density, wronskian, wronskian_at, DiffusionSpec,
};
use greeneq::Error;
use proptest::prelude::*;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

fn driftless() -> DiffusionSpec {
    DiffusionSpec::new(0.0, 2f64.sqrt(), 1.0).unwrap()
}

#[test]
fn symmetric_driftless_roots_are_plus_minus_one() {
    let p = fundamental_solutions(&driftless()).unwrap();
    assert!(close(p.beta_plus, 1.0, 1e-14));
    assert!(close(p.beta_minus, -1.0, 1e-14));
}

#[test]
fn roots_solve_the_characteristic_polynomial() {
    let spec = DiffusionSpec::new(0.02, 0.15, 0.54).unwrap();
    let p = fundamental_solutions(&spec).unwrap();
    // Quadratic formula for 0.01125 β² + 0.02 β − 0.54 = 0.
    let disc = (0.02f64 * 0.02 + 4.0 * 0.01125 * 0.54).sqrt();
    assert!(close(p.beta_plus, (-0.02 + disc) / (2.0 * 0.01125), 1e-13));
    assert!(close(p.beta_minus, (-0.02 - disc) / (2.0 * 0.01125), 1e-13));
    for beta in [p.beta_plus, p.beta_minus] {
        assert!((0.01125 * beta * beta + 0.02 * beta - 0.54).abs() < 1e-12);
    }
}

#[test]
fn zero_volatility_is_rejected() {
    assert!(matches!(DiffusionSpec::new(0.02, 0.0, 0.54), Err(Error::Validation(_))));
    assert!(matches!(DiffusionSpec::new(0.02, 0.15, 0.0), Err(Error::Validation(_))));
    let bad = DiffusionSpec { drift: 0.0, volatility: 0.0, kill_rate: 1.0 };
    assert!(matches!(fundamental_solutions(&bad), Err(Error::Validation(_))));
}

#[test]
fn general_diffusions_are_not_implemented() {
    let spec = greeneq::diffusion::GeneralDiffusion {
        drift: std::sync::Arc::new(|z| 0.01 * z),
        volatility: std::sync::Arc::new(|z| 0.1 * z),
        kill_rate: 0.07,
    };
    assert!(matches!(fundamental_solutions_general(&spec), Err(Error::NotImplemented(_))));
}

#[test]
fn scale_density_values() {
    assert_eq!(scale_density(&driftless(), 7.3), 1.0);
    let spec = DiffusionSpec::new(0.02, 0.15, 0.54).unwrap();
    assert_eq!(scale_density(&spec, 0.0), 1.0);
    // exp(−∫₀¹⁰ 2μ/σ² dy) by trapezoid integration of the constant integrand.
    let n = 1000;
    let integral: f64 = (0..n).map(|_| 2.0 * 0.02 / 0.0225 * (10.0 / n as f64)).sum();
    assert!(close(scale_density(&spec, 10.0), (-integral).exp(), 1e-12));
    assert!(close(scale_density(&spec, 10.0), (-0.4f64 / 0.0225).exp(), 1e-14));
}

#[test]
fn speed_density_values() {
    for z in [0.0, 1.0, 25.0] {
        assert!(close(speed_density(&driftless(), z), 1.0, 1e-14));
    }
    let spec = DiffusionSpec::new(0.02, 0.15, 0.54).unwrap();
    assert!(close(speed_density(&spec, 0.0), 2.0 / 0.0225, 1e-14));
    assert!(close(speed_density(&spec, 0.0), 88.888_888_888_9, 1e-11));
}

#[test]
fn wronskian_values() {
    assert!(close(wronskian(&driftless()).unwrap(), 2.0, 1e-14));
    let spec = DiffusionSpec::new(0.02, 0.15, 0.54).unwrap();
    let p = fundamental_solutions(&spec).unwrap();
    // Definition [ψ′φ − φ′ψ]/S′ at z = 0 with ψ = e^{β₊z}, φ = e^{β₋z}.
    let definitional = p.beta_plus - p.beta_minus;
    assert!(close(wronskian(&spec).unwrap(), definitional, 1e-14));
}

#[test]
fn killed_psi_values() {
    let spec = DiffusionSpec::new(0.02, 0.15, 0.54).unwrap();
    let p = fundamental_solutions(&spec).unwrap();
    assert_eq!(psi_killed(&spec, 0.0).unwrap(), 0.0);
    let mut prev = 0.0;
    for i in 1..=200 {
        let z = 0.05 * i as f64;
        let v = psi_killed(&spec, z).unwrap();
        assert!(close(v, (p.beta_plus * z).exp() - (p.beta_minus * z).exp(), 1e-13));
        assert!(v > prev);
        prev = v;
    }
    assert!(psi_killed(&spec, 400.0).unwrap() > 1e100);
}

#[test]
fn driftless_green_kernel_value() {
    let expected = 0.5 * (-2f64).exp() * (1f64.exp() - (-1f64).exp());
    assert!(close(green_kernel_killed(&driftless(), 1.0, 2.0).unwrap(), expected, 1e-14));
    assert_eq!(green_kernel_killed(&driftless(), 0.0, 2.0).unwrap(), 0.0);
    assert_eq!(green_kernel_killed(&driftless(), 2.0, 0.0).unwrap(), 0.0);
}

#[test]
fn log_variants_survive_overflow() {
    let spec = DiffusionSpec::new(0.02, 0.15, 0.07).unwrap();
    let p = fundamental_solutions(&spec).unwrap();
    let z = 500.0;
    assert!(p.psi(z).is_infinite());
    let log = p.log_psi_killed(z);
    assert!(log.is_finite());
    assert!(close(log, p.beta_plus * z, 1e-12));
    assert!(close(p.log_phi(z), p.beta_minus * z, 1e-14));
}

fn arb_spec() -> impl Strategy<Value = DiffusionSpec> {
    (-0.1f64..0.1, 0.05f64..0.5, 0.01f64..1.0).prop_map(|(mu, sigma, q)| DiffusionSpec::new(mu, sigma, q).unwrap())
}

proptest! {
    #[test]
    fn fundamental_solutions_solve_the_ode(spec in arb_spec()) {
        let p = fundamental_solutions(&spec).unwrap();
        prop_assert!(p.beta_plus > 0.0 && p.beta_minus < 0.0);
        let a = 0.5 * spec.volatility * spec.volatility;
        for i in 1..=100 {
            let z = 0.1 * i as f64;
            for (beta, u) in [(p.beta_plus, p.psi(z)), (p.beta_minus, p.phi(z))] {
                let residual = a * beta * beta * u + spec.drift * beta * u - spec.kill_rate * u;
                prop_assert!(residual.abs() <= 1e-10 * u.abs().max(1.0) * (1.0 + beta * beta));
            }
            prop_assert!(p.psi(z) > p.psi(z - 0.1));
            prop_assert!(p.phi(z) < p.phi(z - 0.1));
        }
    }

    #[test]
    fn wronskian_is_constant_and_positive(spec in arb_spec()) {
        let w0 = wronskian_at(&spec, 0.0).unwrap();
        prop_assert!(w0 > 0.0);
        for z in [1.0, 50.0] {
            prop_assert!(close(wronskian_at(&spec, z).unwrap(), w0, 1e-9));
        }
    }

    #[test]
    fn green_kernel_is_symmetric_and_nonnegative(spec in arb_spec(), z in 0.0f64..30.0, y in 0.0f64..30.0) {
        let g = green_kernel_killed(&spec, z, y).unwrap();
        prop_assert!(g >= 0.0);
        prop_assert!(close(g, green_kernel_killed(&spec, y, z).unwrap(), 1e-12));
        prop_assert_eq!(green_kernel_killed(&spec, 0.0, y).unwrap(), 0.0);
    }

    #[test]
    fn speed_times_scale_is_reciprocal_variance(spec in arb_spec(), z in 0.0f64..20.0) {
        let s2 = spec.volatility * spec.volatility;
        // Keep both exponentials inside the f64 range.
        prop_assume!((2.0 * spec.drift * z / s2).abs() < 300.0);
        prop_assert!(close(speed_density(&spec, z) * scale_density(&spec, z) * s2 / 2.0, 1.0, 1e-12));
    }
}

use std::f64::consts::PI;

use approx::assert_relative_eq;
use heatbound::quadrature::{integrate, periodic_trapezoid, tanh_sinh};
use heatbound::{Error, QuadratureSpec};
use proptest::prelude::*;

#[test]
fn gauss_kronrod_on_smooth_and_peaked_integrands() {
    let r = integrate(|x| (-x * x).exp(), -8.0, 8.0, &[], 0.0, 1e-13, 200).unwrap();
    assert_relative_eq!(r.value, PI.sqrt(), max_relative = 1e-13);
    let r = integrate(|x| 1.0 / (1.0 + 1e4 * x * x), -1.0, 1.0, &[], 0.0, 1e-12, 500).unwrap();
    assert_relative_eq!(r.value, 2.0 * 100f64.atan() / 100.0, max_relative = 1e-12);
    assert!(r.error <= 1e-12 * r.value);
}

#[test]
fn tanh_sinh_handles_endpoint_singularities() {
    // ∫₀¹ ln(x)/√x dx = −4, ∫₀¹ (1−x)^{−1/2} dx = 2
    let r = tanh_sinh(|_, da, _| da.ln() / da.sqrt(), 0.0, 1.0, 1e-12).unwrap();
    assert_relative_eq!(r.value, -4.0, max_relative = 1e-11);
    let r = tanh_sinh(|_, _, db| 1.0 / db.sqrt(), 0.0, 1.0, 1e-12).unwrap();
    assert_relative_eq!(r.value, 2.0, max_relative = 1e-11);
    assert_eq!(tanh_sinh(|x, _, _| x, 2.0, 2.0, 1e-12).unwrap().value, 0.0);
}

#[test]
fn periodic_trapezoid_is_spectral() {
    // ∫ over [0, 2π]² of e^{cos x + cos y} = (2π I₀(1))²
    let i0 = 1.2660658777520082;
    let r = periodic_trapezoid(|x| (x[0].cos() + x[1].cos()).exp(), &[0.0, 0.0], &[2.0 * PI, 2.0 * PI], &[8, 8], 1 << 16, 1e-13, 0.0)
        .unwrap();
    assert_relative_eq!(r.value, (2.0 * PI * i0).powi(2), max_relative = 1e-12);
    assert!(r.evaluations <= 1 << 16);
}

#[test]
fn periodic_trapezoid_failures() {
    assert!(matches!(periodic_trapezoid(|_| 1.0, &[0.0], &[1.0, 1.0], &[4, 4], 64, 1e-9, 0.0), Err(Error::Domain(_))));
    // a cusp converges only algebraically, so a small node budget runs out
    let cusp = |x: &[f64]| (PI * x[0]).sin().abs().sqrt();
    assert!(matches!(periodic_trapezoid(cusp, &[0.0], &[1.0], &[4], 256, 1e-14, 0.0), Err(Error::QuadratureFailure { .. })));
}

#[test]
fn infinite_bounds_are_rejected() {
    assert!(integrate(|x| x, 0.0, f64::INFINITY, &[], 0.0, 1e-9, 10).is_err());
    assert!(integrate(|_| f64::NAN, 0.0, 1.0, &[], 0.0, 1e-9, 10).is_err());
}

#[test]
fn spec_defaults_and_validation() {
    let q = QuadratureSpec::default();
    assert!(q.validate().is_ok());
    assert_eq!(q.analytic_tol(), 1e-8);
    assert_eq!(q.fd_tol(), 1e-4);
    let scaled = QuadratureSpec { tolerance_scale: 10.0, ..q.clone() };
    assert_eq!(scaled.analytic_tol(), 1e-7);
    for bad in [
        QuadratureSpec { tol: 0.0, ..q.clone() },
        QuadratureSpec { tol: 0.5, ..q.clone() },
        QuadratureSpec { r_points: 0, ..q.clone() },
        QuadratureSpec { tolerance_scale: -1.0, ..q.clone() },
    ] {
        assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
    }
    let json = serde_json::to_string(&q).unwrap();
    assert_eq!(serde_json::from_str::<QuadratureSpec>(&json).unwrap(), q);
    assert!(serde_json::from_str::<QuadratureSpec>(r#"{"tolerance": 1}"#).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn polynomials_are_exact(c in prop::collection::vec(-10.0f64..10.0, 1..12), a in -3.0f64..0.0, b in 0.1f64..3.0) {
        let p = |x: f64| c.iter().rev().fold(0.0, |acc, k| acc * x + k);
        let prim = |x: f64| c.iter().enumerate().rev().fold(0.0, |acc, (i, k)| acc * x + k / (i + 1) as f64) * x;
        let r = integrate(p, a, b, &[], 1e-8, 1e-12, 100).unwrap();
        let exact = prim(b) - prim(a);
        prop_assert!((r.value - exact).abs() <= 1e-8 + 1e-12 * exact.abs());
    }

    #[test]
    fn integration_is_additive(s in 0.1f64..5.0, m in 0.05f64..0.95) {
        let f = |x: f64| (s * x).sin() * (-x).exp();
        let i = |a: f64, b: f64| integrate(f, a, b, &[], 1e-14, 1e-12, 200).unwrap().value;
        let (whole, split) = (i(0.0, 1.0), i(0.0, m) + i(m, 1.0));
        prop_assert!((whole - split).abs() <= 1e-12 * (1.0 + whole.abs()));
    }

    #[test]
    fn breakpoints_do_not_change_smooth_integrals(k in prop::collection::vec(0.01f64..0.99, 0..5)) {
        let f = |x: f64| x.cos();
        let r = integrate(f, 0.0, 1.0, &k, 0.0, 1e-13, 200).unwrap().value;
        prop_assert!((r - 1f64.sin()).abs() < 1e-13);
    }
}

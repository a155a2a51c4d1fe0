mod common;

use common::{random_injection, random_network, rng, Ratios};
use num_complex::Complex64;
use proptest::prelude::*;
use radopf::exactness::verify;
use radopf::powerflow::{residuals, sweep_solve, PowerFlowError, SweepOptions};
use radopf::{Line, RadialNetwork};

/// Receiving-end voltage of a single line: the larger root of
/// v² − (v₀ + 2(rP + xQ))v + |z|²|S|² = 0.
fn single_line_oracle(v0: f64, r: f64, x: f64, s: Complex64) -> (f64, f64) {
    let c = v0 + 2.0 * (r * s.re + x * s.im);
    let k = (r * r + x * x) * s.norm_sqr();
    let v = 0.5 * (c + (c * c - 4.0 * k).sqrt());
    (v, s.norm_sqr() / v)
}

#[test]
fn single_line_matches_closed_form() {
    let cases = [
        (1.0, 0.01, 0.02, Complex64::new(-0.5, -0.2)),
        (1.05, 0.1, 0.05, Complex64::new(-1.0, -0.3)),
        (0.95, 0.003, 0.009, Complex64::new(0.8, -0.6)),
        (1.0, 0.05, 0.05, Complex64::new(0.3, 0.4)),
    ];
    for (v0, r, x, s) in cases {
        let net = RadialNetwork::with_default_bounds(2, &[Line::new(1, 0, r, x)], v0).unwrap();
        let st =
            sweep_solve(&net, &[Complex64::new(0.0, 0.0), s], &SweepOptions { tol: 1e-14, max_iter: 500 }).unwrap();
        let (v, ell) = single_line_oracle(v0, r, x, s);
        assert!((st.v[1] - v).abs() < 1e-10, "{} vs {v}", st.v[1]);
        assert!((st.ell[1] - ell).abs() < 1e-10);
        assert_eq!(st.flow[1], s);
        let s0 = -(s - Complex64::new(r, x) * ell);
        assert!((st.s0 - s0).norm() < 1e-10);
    }
}

#[test]
fn residuals_respect_tolerance() {
    let mut r = rng(31);
    let net = random_network(&mut r, 30, Ratios::Random);
    let s = random_injection(&mut r, 30, 0.05);
    for tol in [1e-6, 1e-8, 1e-10, 1e-12] {
        let st = sweep_solve(&net, &s, &SweepOptions { tol, max_iter: 500 }).unwrap();
        let res = residuals(&net, &st);
        assert!(res.overall <= tol, "tol {tol}: {res:?}");
        assert!(res.flow_balance <= tol && res.voltage_drop <= tol && res.current <= tol);
    }
}

#[test]
fn impossible_load_reports_nonconvergence() {
    let net = RadialNetwork::with_default_bounds(2, &[Line::new(1, 0, 0.5, 0.5)], 1.0).unwrap();
    let s = [Complex64::new(0.0, 0.0), Complex64::new(-5.0, -5.0)];
    assert!(matches!(sweep_solve(&net, &s, &SweepOptions::default()), Err(PowerFlowError::NotConverged { .. })));
}

#[test]
fn invalid_inputs_rejected() {
    let net = RadialNetwork::with_default_bounds(2, &[Line::new(1, 0, 0.01, 0.01)], 1.0).unwrap();
    let s = [Complex64::new(0.0, 0.0); 2];
    assert!(matches!(
        sweep_solve(&net, &s, &SweepOptions { tol: 0.0, max_iter: 10 }),
        Err(PowerFlowError::InvalidOptions { .. })
    ));
    assert!(matches!(
        sweep_solve(&net, &s[..1], &SweepOptions::default()),
        Err(PowerFlowError::Length { got: 1, expected: 2 })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn power_is_conserved(seed in any::<u64>(), n in 2usize..50, scale in 0.001f64..0.1) {
        let mut r = rng(seed);
        let net = random_network(&mut r, n, Ratios::Random);
        let s = random_injection(&mut r, n, scale);
        if let Ok(st) = sweep_solve(&net, &s, &SweepOptions::default()) {
            let injected = st.s0.re + s[1..].iter().map(|x| x.re).sum::<f64>();
            prop_assert!((injected - st.losses(&net)).abs() <= 1e-9);
            let reactive = st.s0.im + s[1..].iter().map(|x| x.im).sum::<f64>();
            let xl: f64 = net.lines().map(|l| l.x * st.ell[l.from.0]).sum();
            prop_assert!((reactive - xl).abs() <= 1e-9);
        }
    }

    #[test]
    fn sweep_points_are_exact(seed in any::<u64>(), n in 2usize..50) {
        let mut r = rng(seed);
        let net = random_network(&mut r, n, Ratios::Random);
        let s = random_injection(&mut r, n, 0.05);
        if let Ok(st) = sweep_solve(&net, &s, &SweepOptions::default()) {
            let rep = verify(&net, &st, 1e-9).unwrap();
            prop_assert!(rep.exact, "max gap {}", rep.max_gap);
            prop_assert!(residuals(&net, &st).overall <= 1e-10);
        }
    }
}

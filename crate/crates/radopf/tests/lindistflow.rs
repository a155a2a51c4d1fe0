mod common;

use common::{random_injection, random_network, rng, Ratios};
use num_complex::Complex64;
use proptest::prelude::*;
use radopf::lindistflow::{hat_s, hat_v, in_svolt, svolt_rows, LinearFlowSolution};
use radopf::powerflow::{sweep_solve, SweepOptions};
use radopf::{BusId, RadialNetwork};

/// Ŝᵢ by brute force: every bus j whose path to the root passes line i.
fn subtree_oracle(net: &RadialNetwork, s: &[Complex64]) -> Vec<Complex64> {
    let n = net.bus_count();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for i in 1..n {
        for j in 1..n {
            if net.path(BusId(j)).contains(&BusId(i)) {
                out[i] += s[j];
            }
        }
    }
    out
}

fn voltage_oracle(net: &RadialNetwork, s: &[Complex64]) -> Vec<f64> {
    let sh = subtree_oracle(net, s);
    (0..net.bus_count())
        .map(|i| {
            net.v0()
                + net
                    .path(BusId(i))
                    .iter()
                    .map(|&k| {
                        let l = net.line(k);
                        2.0 * (l.r * sh[k.0].re + l.x * sh[k.0].im)
                    })
                    .sum::<f64>()
        })
        .collect()
}

#[test]
fn matches_brute_force_sums() {
    let mut r = rng(11);
    for trial in 0..50 {
        let n = 2 + trial % 30;
        let net = random_network(&mut r, n, Ratios::Random);
        let s = random_injection(&mut r, n, 0.1);
        let sh = hat_s(&net, &s);
        let so = subtree_oracle(&net, &s);
        for i in 1..n {
            assert!((sh[i] - so[i]).norm() < 1e-12);
        }
        let vh = hat_v(&net, &s);
        let vo = voltage_oracle(&net, &s);
        for i in 0..n {
            assert!((vh[i] - vo[i]).abs() < 1e-12);
        }
        let sol = LinearFlowSolution::new(&net, &s);
        assert_eq!(sol.s_hat, sh);
        assert_eq!(sol.v_hat, vh);
    }
}

#[test]
fn svolt_rows_reproduce_hat_v() {
    let mut r = rng(12);
    let net = random_network(&mut r, 25, Ratios::Random);
    let rows = svolt_rows(&net);
    assert_eq!(rows.len(), 24);
    for _ in 0..100 {
        let s = random_injection(&mut r, 25, 0.2);
        let vh = hat_v(&net, &s);
        for row in &rows {
            assert!((row.eval(&s) - vh[row.bus.0]).abs() < 1e-12);
        }
    }
}

#[test]
fn svolt_slack_is_tightest_row() {
    let mut r = rng(13);
    let net = random_network(&mut r, 15, Ratios::Random);
    let s = random_injection(&mut r, 15, 0.5);
    let verdict = in_svolt(&net, &s);
    let rows = svolt_rows(&net);
    let slack = rows.iter().map(|row| row.vmax - row.eval(&s)).fold(f64::INFINITY, f64::min);
    assert!((verdict.slack - slack).abs() < 1e-12);
    assert_eq!(verdict.inside, slack >= 0.0);
}

#[test]
fn zero_injection_is_flat() {
    let mut r = rng(14);
    let net = random_network(&mut r, 10, Ratios::Random);
    let s = vec![Complex64::new(0.0, 0.0); 10];
    assert!(hat_v(&net, &s).iter().all(|&v| v == net.v0()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hat_maps_are_affine(seed in any::<u64>(), n in 2usize..30, a in -2.0f64..2.0) {
        let mut r = rng(seed);
        let net = random_network(&mut r, n, Ratios::Random);
        let s1 = random_injection(&mut r, n, 0.1);
        let s2 = random_injection(&mut r, n, 0.1);
        let mix: Vec<Complex64> = s1.iter().zip(&s2).map(|(x, y)| x * a + y).collect();
        let (h1, h2, hm) = (hat_s(&net, &s1), hat_s(&net, &s2), hat_s(&net, &mix));
        for i in 1..n {
            prop_assert!((hm[i] - (h1[i] * a + h2[i])).norm() < 1e-12);
        }
        let v0 = net.v0();
        let (v1, v2, vm) = (hat_v(&net, &s1), hat_v(&net, &s2), hat_v(&net, &mix));
        for i in 0..n {
            let expect = v0 + a * (v1[i] - v0) + (v2[i] - v0);
            prop_assert!((vm[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_model_bounds_the_exact_flow(seed in any::<u64>(), n in 2usize..40) {
        let mut r = rng(seed);
        let net = random_network(&mut r, n, Ratios::Random);
        let s = random_injection(&mut r, n, 0.05);
        if let Ok(st) = sweep_solve(&net, &s, &SweepOptions::default()) {
            let sh = hat_s(&net, &s);
            let vh = hat_v(&net, &s);
            for i in 1..n {
                prop_assert!(st.flow[i].re <= sh[i].re + 1e-9);
                prop_assert!(st.flow[i].im <= sh[i].im + 1e-9);
                prop_assert!(st.v[i] <= vh[i] + 1e-9);
            }
        }
    }
}

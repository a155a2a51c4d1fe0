//! Random instance generators shared by the integration suites.
#![allow(dead_code)]

use num_complex::Complex64;
use radopf::netmodel::{build_network, InjectionBounds};
use radopf::{BusId, DevicePortfolio, DeviceSpec, Line, RadialNetwork};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Parent of bus i is uniform on 0..i.
pub fn random_parents<R: Rng>(rng: &mut R, buses: usize) -> Vec<usize> {
    (0..buses).map(|i| if i == 0 { 0 } else { rng.random_range(0..i) }).collect()
}

fn depths(parents: &[usize]) -> Vec<usize> {
    let mut d = vec![0; parents.len()];
    for i in 1..parents.len() {
        d[i] = d[parents[i]] + 1;
    }
    d
}

/// How line r/x ratios vary with depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratios {
    Random,
    Uniform,
    /// r/x grows toward the leaves
    Increasing,
    /// r/x shrinks toward the leaves
    Decreasing,
}

pub fn random_network<R: Rng>(rng: &mut R, buses: usize, ratios: Ratios) -> RadialNetwork {
    let parents = random_parents(rng, buses);
    let depth = depths(&parents);
    let base: f64 = rng.random_range(0.3..3.0);
    let lines: Vec<Line> = (1..buses)
        .map(|i| {
            let x: f64 = rng.random_range(1e-3..3e-2);
            let ratio = match ratios {
                Ratios::Random => {
                    return Line::new(i, parents[i], rng.random_range(1e-4..1e-1), rng.random_range(1e-4..1e-1))
                }
                Ratios::Uniform => base,
                Ratios::Increasing => base * (1.0 + 0.1 * depth[i] as f64),
                Ratios::Decreasing => base / (1.0 + 0.1 * depth[i] as f64),
            };
            Line::new(i, parents[i], ratio * x, x)
        })
        .collect();
    let vmin: Vec<f64> = (0..buses).map(|_| rng.random_range(0.81..0.95)).collect();
    let vmax = vec![1.21; buses];
    build_network(buses, &lines, 1.0, &vmin, &vmax).unwrap()
}

/// Bound patterns aimed at the individual sufficient conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundMode {
    /// p̄, q̄ ≤ 0 everywhere
    AllNegative,
    /// p̄ ≤ 0, q̄ of either sign
    PNonpositive,
    /// q̄ ≤ 0, p̄ of either sign
    QNonpositive,
    /// both signs, small magnitude
    Small,
    /// both signs, large magnitude
    Large,
}

pub fn random_bounds<R: Rng>(rng: &mut R, buses: usize, mode: BoundMode) -> InjectionBounds {
    let mut draw = |lo: f64, hi: f64| -> Vec<f64> {
        (0..buses).map(|i| if i == 0 { 0.0 } else { rng.random_range(lo..hi) }).collect()
    };
    let (p_up, q_up) = match mode {
        BoundMode::AllNegative => (draw(-1.0, 0.0), draw(-1.0, 0.0)),
        BoundMode::PNonpositive => (draw(-1.0, 0.0), draw(-0.5, 1.0)),
        BoundMode::QNonpositive => (draw(-0.5, 1.0), draw(-1.0, 0.0)),
        BoundMode::Small => (draw(-0.2, 0.2), draw(-0.2, 0.2)),
        BoundMode::Large => (draw(-1.0, 3.0), draw(-1.0, 3.0)),
    };
    InjectionBounds { p_up, q_up }
}

/// Every non-root bus gets a peak load; roughly half get PV and a third get
/// a capacitor.
pub fn random_portfolio<R: Rng>(rng: &mut R, buses: usize, scale: f64) -> DevicePortfolio {
    let mut pf = DevicePortfolio::new(buses);
    for i in 1..buses {
        let b = BusId(i);
        pf.add(b, DeviceSpec::PeakLoad { s_peak: scale * rng.random_range(0.01..0.1) }).unwrap();
        if rng.random_bool(0.5) {
            pf.add(b, DeviceSpec::Photovoltaic { s_nameplate: scale * rng.random_range(0.01..0.2) }).unwrap();
        }
        if rng.random_bool(0.3) {
            pf.add(b, DeviceSpec::Capacitor { q_cap: scale * rng.random_range(0.01..0.1) }).unwrap();
        }
    }
    pf
}

/// Injection with |s| of order `scale`, mostly consumption.
pub fn random_injection<R: Rng>(rng: &mut R, buses: usize, scale: f64) -> Vec<Complex64> {
    (0..buses)
        .map(|i| {
            if i == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(scale * rng.random_range(-1.0..0.3), scale * rng.random_range(-1.0..0.5))
            }
        })
        .collect()
}

/// A relaxed (inexact) point for the feasible-point construction.
pub struct InflatedInstance {
    pub net: RadialNetwork,
    pub portfolio: DevicePortfolio,
    pub state: radopf::FlowState,
    pub line: BusId,
    pub excess: f64,
}

/// Injection drawn inside the device sets: loads fixed, capacitors and PV
/// uniform over their ranges (PV by rejection from the half-disk).
pub fn device_injection<R: Rng>(rng: &mut R, pf: &DevicePortfolio) -> Vec<Complex64> {
    let mut s = pf.fixed_injection();
    for (b, d) in pf.iter() {
        match *d {
            DeviceSpec::Capacitor { q_cap } => s[b.0].im += rng.random_range(0.0..=q_cap),
            DeviceSpec::Photovoltaic { s_nameplate: r } => loop {
                let (p, q) = (rng.random_range(0.0..=r), rng.random_range(-r..=r));
                if p * p + q * q <= r * r {
                    s[b.0] += Complex64::new(p, q);
                    break;
                }
            },
            _ => {}
        }
    }
    s
}

/// Draws instances until one has C1, s ∈ 𝒮_volt and a feasible inflated point.
pub fn inflated_instance<R: Rng>(rng: &mut R) -> InflatedInstance {
    use radopf::c1cond::c1_holds;
    use radopf::lindistflow::in_svolt;
    use radopf::netmodel::injection_bounds;
    use radopf::powerflow::{sweep_solve_with_excess, SweepOptions};
    loop {
        let n = rng.random_range(3..=30);
        let net = random_network(rng, n, Ratios::Random);
        let scale = rng.random_range(0.2..1.0);
        let portfolio = random_portfolio(rng, n, scale);
        if !c1_holds(&net, &injection_bounds(&portfolio, 1.0).unwrap()) {
            continue;
        }
        let s = device_injection(rng, &portfolio);
        if !in_svolt(&net, &s).inside {
            continue;
        }
        let line = BusId(rng.random_range(1..n));
        let excess = rng.random_range(1e-4..1e-2);
        let mut extra = vec![0.0; n];
        extra[line.0] = excess;
        let Ok(state) = sweep_solve_with_excess(&net, &s, Some(&extra), &SweepOptions::default()) else { continue };
        if (1..n).any(|i| state.v[i] < net.vmin()[i] || state.v[i] > net.vmax()[i]) {
            continue;
        }
        return InflatedInstance { net, portfolio, state, line, excess };
    }
}

/// Largest violation of the relaxation's constraints at a point: linear
/// equations, voltage bounds, ℓ ≥ |S|²/v and the injection sets.
pub fn relaxation_violation(net: &RadialNetwork, pf: &DevicePortfolio, st: &radopf::FlowState) -> f64 {
    let res = radopf::powerflow::residuals(net, st);
    let mut worst = res.flow_balance.max(res.substation_balance).max(res.voltage_drop);
    for i in 1..net.bus_count() {
        worst = worst.max(net.vmin()[i] - st.v[i]).max(st.v[i] - net.vmax()[i]);
        worst = worst.max(st.flow[i].norm_sqr() - st.v[i] * st.ell[i]);
    }
    if !radopf::netmodel::injection_feasible(pf, &st.s) {
        worst = f64::INFINITY;
    }
    worst
}

//! Exactness of relaxation points and the feasible-point construction that
//! certifies descent from an inexact point.

use crate::netmodel::{BusId, RadialNetwork};
use crate::powerflow::FlowState;
use crate::socp::Objective;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_EXACTNESS_TOL: f64 = 1e-6;
/// Gap below which a line counts as satisfying ℓ = |S|²/v during construction.
pub const EQUALITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExactnessError {
    #[error("voltage at bus {bus} is {v}, must be positive")]
    NonpositiveVoltage { bus: usize, v: f64 },
    #[error("state already satisfies ℓ = |S|²/v on every line")]
    NoViolation,
    #[error("no leaf path has tight lines followed by a strictly relaxed line")]
    NoEligiblePath,
    #[error("state vectors have length {got}, network has {expected} buses")]
    Length { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathViolation {
    pub leaf: BusId,
    /// Position from the root (line l_m enters l_{m−1}).
    pub m: usize,
    pub line: BusId,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactnessReport {
    pub exact: bool,
    pub tol: f64,
    /// (vᵢℓᵢ − |Sᵢ|²)/max(1, |Sᵢ|²) per line, slot 0 unused.
    pub gaps: Vec<f64>,
    pub max_gap: f64,
    pub worst_line: Option<BusId>,
    /// For each leaf path, the first line from the root whose gap exceeds tol.
    pub first_violation: Vec<PathViolation>,
}

fn check_len(net: &RadialNetwork, st: &FlowState) -> Result<(), ExactnessError> {
    let n = net.bus_count();
    for got in [st.s.len(), st.flow.len(), st.v.len(), st.ell.len()] {
        if got != n {
            return Err(ExactnessError::Length { got, expected: n });
        }
    }
    Ok(())
}

pub fn relative_gaps(net: &RadialNetwork, st: &FlowState) -> Result<Vec<f64>, ExactnessError> {
    check_len(net, st)?;
    let mut gaps = vec![0.0; net.bus_count()];
    for i in 1..net.bus_count() {
        let v = st.v[i];
        if !(v > 0.0) {
            return Err(ExactnessError::NonpositiveVoltage { bus: i, v });
        }
        let s2 = st.flow[i].norm_sqr();
        gaps[i] = (v * st.ell[i] - s2) / s2.max(1.0);
    }
    Ok(gaps)
}

/// Root-first line sequence of a leaf path.
fn root_first(net: &RadialNetwork, leaf: BusId) -> Vec<BusId> {
    net.path(leaf).iter().rev().copied().collect()
}

pub fn verify(net: &RadialNetwork, st: &FlowState, tol: f64) -> Result<ExactnessReport, ExactnessError> {
    let gaps = relative_gaps(net, st)?;
    let (worst_line, max_gap) = (1..net.bus_count())
        .map(|i| (BusId(i), gaps[i]))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map_or((None, 0.0), |(b, g)| (Some(b), g));
    let first_violation = net
        .leaves()
        .iter()
        .filter_map(|&leaf| {
            root_first(net, leaf).iter().position(|b| gaps[b.0] > tol).map(|k| PathViolation {
                leaf,
                m: k + 1,
                line: root_first(net, leaf)[k],
            })
        })
        .collect();
    Ok(ExactnessReport { exact: max_gap <= tol, tol, gaps, max_gap, worst_line, first_violation })
}

pub fn objective_value(st: &FlowState, objective: &Objective) -> f64 {
    objective.costs.iter().enumerate().map(|(i, c)| c.eval(if i == 0 { st.s0.re } else { st.s[i].re })).sum()
}

/// Largest componentwise difference over (s, S, v, ℓ, s₀).
pub fn solution_distance(a: &FlowState, b: &FlowState) -> f64 {
    let cdiff = |x: &[Complex64], y: &[Complex64]| {
        x.iter().zip(y).map(|(p, q)| (p.re - q.re).abs().max((p.im - q.im).abs())).fold(0.0, f64::max)
    };
    let rdiff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    cdiff(&a.s, &b.s)
        .max(cdiff(&a.flow, &b.flow))
        .max(rdiff(&a.v, &b.v))
        .max(rdiff(&a.ell, &b.ell))
        .max(cdiff(&[a.s0], &[b.s0]))
}

/// Flow change on the k-th path line (k = 0 is the virtual line above the
/// substation, whose flow is −s₀).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathDelta {
    pub k: usize,
    pub line: Option<BusId>,
    pub delta: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstructionTrace {
    pub input: FlowState,
    pub output: FlowState,
    pub leaf: BusId,
    pub m: usize,
    /// ΔS on path positions k = 0..m−1.
    pub delta_flow: Vec<PathDelta>,
    /// v′ − v per bus.
    pub delta_v: Vec<f64>,
    /// Bₖ for k = 1..m−1, mapping (ΔPₖ, ΔQₖ) to (ΔPₖ₋₁, ΔQₖ₋₁).
    pub b_matrices: Vec<[[f64; 2]; 2]>,
    pub objective_before: f64,
    pub objective_after: f64,
}

/// Builds a point that keeps s, makes ℓ tight along a path ending at the
/// first relaxed line, and recomputes flows and voltages accordingly.
pub fn construct_point(
    net: &RadialNetwork,
    st: &FlowState,
    objective: &Objective,
) -> Result<ConstructionTrace, ExactnessError> {
    let gaps = relative_gaps(net, st)?;
    if (1..net.bus_count()).all(|i| gaps[i] <= EQUALITY_TOL) {
        return Err(ExactnessError::NoViolation);
    }
    let mut choice = None;
    for &leaf in net.leaves() {
        let path = root_first(net, leaf);
        for (k, b) in path.iter().enumerate() {
            let g = gaps[b.0];
            if g > EQUALITY_TOL {
                choice = Some((leaf, path.clone(), k + 1));
                break;
            }
            if g < -EQUALITY_TOL {
                break;
            }
        }
        if choice.is_some() {
            break;
        }
    }
    let (leaf, path, m) = choice.ok_or(ExactnessError::NoEligiblePath)?;
    // path[k − 1] is the line l_k → l_{k−1}
    let line_at = |k: usize| path[k - 1];

    let mut out = st.clone();
    let mut b_matrices = Vec::new();
    for k in (1..=m).rev() {
        let b = line_at(k);
        out.ell[b.0] = out.flow[b.0].norm_sqr() / st.v[b.0];
        let upstream_bus = if k == 1 { BusId::ROOT } else { line_at(k - 1) };
        let mut acc = Complex64::new(0.0, 0.0);
        for &j in net.children(upstream_bus) {
            acc += out.flow[j.0] - net.line(j).z() * out.ell[j.0];
        }
        if k == 1 {
            out.s0 = -acc;
        } else {
            out.flow[upstream_bus.0] = st.s[upstream_bus.0] + acc;
        }
    }
    for k in 1..m {
        let b = line_at(k);
        let l = net.line(b);
        let (pm, qm) = (0.5 * (st.flow[b.0].re + out.flow[b.0].re), 0.5 * (st.flow[b.0].im + out.flow[b.0].im));
        let g = 2.0 / st.v[b.0];
        b_matrices.push([[1.0 - g * l.r * pm, -g * l.r * qm], [-g * l.x * pm, 1.0 - g * l.x * qm]]);
    }
    out.v[0] = net.v0();
    for &b in net.topo_order().iter().skip(1) {
        let l = net.line(b);
        let f = out.flow[b.0];
        out.v[b.0] = out.v[l.to.0] + 2.0 * (l.r * f.re + l.x * f.im) - l.z_norm_sqr() * out.ell[b.0];
    }

    let mut delta_flow = vec![PathDelta { k: 0, line: None, delta: -(out.s0 - st.s0) }];
    for k in 1..m {
        let b = line_at(k);
        delta_flow.push(PathDelta { k, line: Some(b), delta: out.flow[b.0] - st.flow[b.0] });
    }
    let delta_v = out.v.iter().zip(&st.v).map(|(a, b)| a - b).collect();
    Ok(ConstructionTrace {
        input: st.clone(),
        objective_before: objective_value(st, objective),
        objective_after: objective_value(&out, objective),
        output: out,
        leaf,
        m,
        delta_flow,
        delta_v,
        b_matrices,
    })
}

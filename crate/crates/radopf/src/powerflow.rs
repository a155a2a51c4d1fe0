//! Forward-backward sweep solver for the branch flow equations.

use crate::netmodel::RadialNetwork;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One point (s, S, v, ℓ, s₀) of the branch flow variables. Per-line
/// vectors are indexed by child bus (slot 0 unused).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub s: Vec<Complex64>,
    /// Sending-end flow S on each line.
    pub flow: Vec<Complex64>,
    pub v: Vec<f64>,
    pub ell: Vec<f64>,
    pub s0: Complex64,
}

impl FlowState {
    pub fn zero(net: &RadialNetwork) -> Self {
        let n = net.bus_count();
        FlowState {
            s: vec![Complex64::new(0.0, 0.0); n],
            flow: vec![Complex64::new(0.0, 0.0); n],
            v: vec![net.v0(); n],
            ell: vec![0.0; n],
            s0: Complex64::new(0.0, 0.0),
        }
    }

    /// Total resistive loss Σ r ℓ.
    pub fn losses(&self, net: &RadialNetwork) -> f64 {
        net.lines().map(|l| l.r * self.ell[l.from.0]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { tol: 1e-10, max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PowerFlowError {
    #[error("sweep did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("invalid sweep options: tol={tol}, max_iter={max_iter}")]
    InvalidOptions { tol: f64, max_iter: usize },
    #[error("injection vector has length {got}, expected {expected}")]
    Length { got: usize, expected: usize },
}

/// Maximum residual of each branch flow equation family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Flow conservation at non-root buses.
    pub flow_balance: f64,
    /// Flow conservation at the substation.
    pub substation_balance: f64,
    /// Voltage drop along lines.
    pub voltage_drop: f64,
    /// |vᵢ ℓ − |S|²| on each line.
    pub current: f64,
    pub overall: f64,
}

pub fn sweep_solve(net: &RadialNetwork, s: &[Complex64], options: &SweepOptions) -> Result<FlowState, PowerFlowError> {
    sweep_solve_with_excess(net, s, None, options)
}

/// Sweep where line currents satisfy ℓ = |S|²/v + excess instead of
/// equality. With a non-zero excess the result is a point that satisfies the
/// linear equations but not the current equation (an inexact relaxation
/// point); convergence is measured on the modified equation.
pub fn sweep_solve_with_excess(
    net: &RadialNetwork,
    s: &[Complex64],
    excess: Option<&[f64]>,
    options: &SweepOptions,
) -> Result<FlowState, PowerFlowError> {
    if !(options.tol > 0.0) || options.max_iter == 0 {
        return Err(PowerFlowError::InvalidOptions { tol: options.tol, max_iter: options.max_iter });
    }
    let n = net.bus_count();
    if s.len() != n {
        return Err(PowerFlowError::Length { got: s.len(), expected: n });
    }
    let extra = |i: usize| excess.map_or(0.0, |e| e[i]);
    let mut st = FlowState::zero(net);
    st.s.copy_from_slice(s);
    st.s[0] = Complex64::new(0.0, 0.0);
    let mut residual = f64::INFINITY;
    for _ in 0..options.max_iter {
        // backward: leaves to root, ℓ from the previous voltages
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        for &b in net.topo_order().iter().rev() {
            if b.is_root() {
                continue;
            }
            let l = net.line(b);
            let flow = st.s[b.0] + acc[b.0];
            let ell = flow.norm_sqr() / st.v[b.0] + extra(b.0);
            st.flow[b.0] = flow;
            st.ell[b.0] = ell;
            acc[l.to.0] += flow - l.z() * ell;
        }
        st.s0 = -acc[0];
        // forward: voltages from the root
        for &b in net.topo_order().iter().skip(1) {
            let l = net.line(b);
            let f = st.flow[b.0];
            st.v[b.0] = st.v[l.to.0] + 2.0 * (l.r * f.re + l.x * f.im) - l.z_norm_sqr() * st.ell[b.0];
        }
        if (1..n).any(|i| !(st.v[i] > net.vmin()[i] / 10.0)) {
            return Err(PowerFlowError::NotConverged { iterations: options.max_iter, residual: f64::INFINITY });
        }
        residual = (1..n).map(|i| (st.v[i] * (st.ell[i] - extra(i)) - st.flow[i].norm_sqr()).abs()).fold(0.0, f64::max);
        let linear = residuals(net, &st);
        residual = residual.max(linear.flow_balance).max(linear.substation_balance).max(linear.voltage_drop);
        if residual <= options.tol {
            return Ok(st);
        }
    }
    Err(PowerFlowError::NotConverged { iterations: options.max_iter, residual })
}

pub fn residuals(net: &RadialNetwork, st: &FlowState) -> ResidualReport {
    let n = net.bus_count();
    let mut inflow = vec![Complex64::new(0.0, 0.0); n];
    for l in net.lines() {
        let i = l.from.0;
        inflow[l.to.0] += st.flow[i] - l.z() * st.ell[i];
    }
    let mut r =
        ResidualReport { flow_balance: 0.0, substation_balance: 0.0, voltage_drop: 0.0, current: 0.0, overall: 0.0 };
    for l in net.lines() {
        let i = l.from.0;
        r.flow_balance = r.flow_balance.max((st.flow[i] - st.s[i] - inflow[i]).norm());
        let f = st.flow[i];
        let drop = st.v[i] - st.v[l.to.0] - 2.0 * (l.r * f.re + l.x * f.im) + l.z_norm_sqr() * st.ell[i];
        r.voltage_drop = r.voltage_drop.max(drop.abs());
        r.current = r.current.max((st.v[i] * st.ell[i] - f.norm_sqr()).abs());
    }
    r.substation_balance = (st.s0 + inflow[0]).norm();
    r.overall = r.flow_balance.max(r.substation_balance).max(r.voltage_drop).max(r.current);
    r
}

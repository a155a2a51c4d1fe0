//! Linear DistFlow: lossless flows Ŝ(s) and voltages v̂(s), and the
//! region where v̂ respects the voltage upper bounds.

use crate::netmodel::{BusId, RadialNetwork};
use num_complex::Complex64;
use serde::Serialize;

/// Ŝ and v̂ for one injection vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearFlowSolution {
    pub s_hat: Vec<Complex64>,
    pub v_hat: Vec<f64>,
}

impl LinearFlowSolution {
    pub fn new(net: &RadialNetwork, s: &[Complex64]) -> Self {
        let s_hat = hat_s(net, s);
        let v_hat = hat_v_from_flows(net, &s_hat);
        LinearFlowSolution { s_hat, v_hat }
    }
}

/// Ŝᵢ = Σ of s over the subtree rooted at i, for every line (child bus i).
pub fn hat_s(net: &RadialNetwork, s: &[Complex64]) -> Vec<Complex64> {
    let n = net.bus_count();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for &b in net.topo_order().iter().rev() {
        if b.is_root() {
            continue;
        }
        out[b.0] += s[b.0];
        if let Some(p) = net.parent(b).filter(|p| !p.is_root()) {
            let sub = out[b.0];
            out[p.0] += sub;
        }
    }
    out
}

/// Real-valued subtree sums (used for P̂(p̄) and Q̂(q̄) separately).
pub fn subtree_sums(net: &RadialNetwork, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; net.bus_count()];
    for &b in net.topo_order().iter().rev() {
        if b.is_root() {
            continue;
        }
        out[b.0] += x[b.0];
        if let Some(p) = net.parent(b).filter(|p| !p.is_root()) {
            let sub = out[b.0];
            out[p.0] += sub;
        }
    }
    out
}

pub fn hat_v(net: &RadialNetwork, s: &[Complex64]) -> Vec<f64> {
    hat_v_from_flows(net, &hat_s(net, s))
}

fn hat_v_from_flows(net: &RadialNetwork, s_hat: &[Complex64]) -> Vec<f64> {
    let mut v = vec![0.0; net.bus_count()];
    v[0] = net.v0();
    for &b in net.topo_order().iter().skip(1) {
        let line = net.line(b);
        let drop = 2.0 * (line.r * s_hat[b.0].re + line.x * s_hat[b.0].im);
        v[b.0] = v[line.to.0] + drop;
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SvoltVerdict {
    pub inside: bool,
    pub worst_bus: BusId,
    /// min over buses of v̄ᵢ − v̂ᵢ(s)
    pub slack: f64,
}

pub fn in_svolt(net: &RadialNetwork, s: &[Complex64]) -> SvoltVerdict {
    let v = hat_v(net, s);
    let (worst, slack) = (1..net.bus_count())
        .map(|i| (i, net.vmax()[i] - v[i]))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, f64::INFINITY));
    SvoltVerdict { inside: slack >= 0.0, worst_bus: BusId(worst), slack }
}

/// Affine form of v̂ᵢ(s) ≤ v̄ᵢ: Σ p_coefⱼ pⱼ + Σ q_coefⱼ qⱼ + constant ≤ vmax.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SvoltRow {
    pub bus: BusId,
    /// Indexed by bus; entry 0 is zero.
    pub p_coef: Vec<f64>,
    pub q_coef: Vec<f64>,
    pub constant: f64,
    pub vmax: f64,
}

impl SvoltRow {
    pub fn eval(&self, s: &[Complex64]) -> f64 {
        self.constant
            + self.p_coef.iter().zip(s).map(|(a, s)| a * s.re).sum::<f64>()
            + self.q_coef.iter().zip(s).map(|(a, s)| a * s.im).sum::<f64>()
    }
}

/// One row per non-root bus. The coefficient of pⱼ in row i is twice the
/// resistance summed over the lines shared by the paths of i and j.
pub fn svolt_rows(net: &RadialNetwork) -> Vec<SvoltRow> {
    let n = net.bus_count();
    // cumulative 2·r and 2·x from the root down to each bus
    let mut cr = vec![0.0; n];
    let mut cx = vec![0.0; n];
    for &b in net.topo_order().iter().skip(1) {
        let l = net.line(b);
        cr[b.0] = cr[l.to.0] + 2.0 * l.r;
        cx[b.0] = cx[l.to.0] + 2.0 * l.x;
    }
    (1..n)
        .map(|i| {
            let mut p_coef = vec![0.0; n];
            let mut q_coef = vec![0.0; n];
            // walk the subtree of each ancestor k of i: buses whose deepest
            // common ancestor with i is k get coefficient cr[k]
            let mut prev: Option<BusId> = None;
            let mut anc = Some(BusId(i));
            while let Some(k) = anc.filter(|k| !k.is_root()) {
                let mut stack = vec![k];
                while let Some(b) = stack.pop() {
                    p_coef[b.0] = cr[k.0];
                    q_coef[b.0] = cx[k.0];
                    stack.extend(net.children(b).iter().copied().filter(|c| Some(*c) != prev));
                }
                prev = Some(k);
                anc = net.parent(k);
            }
            SvoltRow { bus: BusId(i), p_coef, q_coef, constant: net.v0(), vmax: net.vmax()[i] }
        })
        .collect()
}

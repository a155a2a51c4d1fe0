//! The a-priori exactness condition C1, its margin under uniform scaling of
//! DG/capacitor nameplates, and the closed-form sufficient conditions.

use crate::lindistflow::subtree_sums;
use crate::netmodel::{injection_bounds, BusId, DevicePortfolio, InjectionBounds, PortfolioError, RadialNetwork};
use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_MARGIN_TOL: f64 = 1e-4;
pub const DEFAULT_MARGIN_CAP: f64 = 1e4;

const STRICTNESS: f64 = 1e-12;

pub type Mat2 = [[f64; 2]; 2];

#[inline]
fn mul(a: &Mat2, w: [f64; 2]) -> [f64; 2] {
    [a[0][0] * w[0] + a[0][1] * w[1], a[1][0] * w[0] + a[1][1] * w[1]]
}

/// A̲ᵢ together with uᵢ = (rᵢ, xᵢ) for one line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineGainMatrix {
    pub line: BusId,
    pub a: Mat2,
    pub u: [f64; 2],
}

impl LineGainMatrix {
    fn new(line: BusId, r: f64, x: f64, vmin: f64, p_plus: f64, q_plus: f64) -> Self {
        let k = 2.0 / vmin;
        let a = [[1.0 - k * r * p_plus, -k * r * q_plus], [-k * x * p_plus, 1.0 - k * x * q_plus]];
        LineGainMatrix { line, a, u: [r, x] }
    }

    /// Strictness threshold for entries of products ending in this u.
    fn threshold(&self) -> f64 {
        STRICTNESS * self.u[0].hypot(self.u[1]).max(1.0)
    }
}

/// P̂(p̄), Q̂(q̄) and the gain matrix of every line.
#[derive(Debug, Clone)]
pub struct GainTable {
    pub p_hat: Vec<f64>,
    pub q_hat: Vec<f64>,
    gains: Vec<LineGainMatrix>,
}

impl GainTable {
    pub fn new(net: &RadialNetwork, bounds: &InjectionBounds) -> Self {
        let p_hat = subtree_sums(net, &bounds.p_up);
        let q_hat = subtree_sums(net, &bounds.q_up);
        let gains = (0..net.bus_count())
            .map(|i| {
                if i == 0 {
                    return LineGainMatrix { line: BusId(0), a: [[1.0, 0.0], [0.0, 1.0]], u: [0.0, 0.0] };
                }
                let l = net.line(BusId(i));
                LineGainMatrix::new(BusId(i), l.r, l.x, net.vmin()[i], p_hat[i].max(0.0), q_hat[i].max(0.0))
            })
            .collect();
        GainTable { p_hat, q_hat, gains }
    }

    pub fn gain(&self, line: BusId) -> &LineGainMatrix {
        &self.gains[line.0]
    }
}

pub fn underline_a(net: &RadialNetwork, bounds: &InjectionBounds, line: BusId) -> LineGainMatrix {
    *GainTable::new(net, bounds).gain(line)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C1Witness {
    pub leaf: BusId,
    /// 1-based positions along the leaf path, counted from the root.
    pub s: usize,
    pub t: usize,
    pub product: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C1Report {
    pub holds: bool,
    pub tested_pairs: usize,
    pub witness: Option<C1Witness>,
    /// Smallest entry over all tested products.
    pub min_entry: f64,
}

pub fn check_c1(net: &RadialNetwork, bounds: &InjectionBounds) -> C1Report {
    check_with(net, &GainTable::new(net, bounds), false)
}

/// Same verdict as [`check_c1`], stopping at the first violation.
pub fn c1_holds(net: &RadialNetwork, bounds: &InjectionBounds) -> bool {
    check_with(net, &GainTable::new(net, bounds), true).holds
}

fn check_with(net: &RadialNetwork, table: &GainTable, early_exit: bool) -> C1Report {
    let mut tested = 0;
    let mut min_entry = f64::INFINITY;
    let mut witness: Option<C1Witness> = None;
    for &leaf in net.leaves() {
        // position k counts from the root: l_1 is the line entering bus 0
        let path = net.path(leaf);
        let line_at = |k: usize| path[path.len() - k];
        for t in 1..=path.len() {
            let last = table.gain(line_at(t));
            let thr = last.threshold();
            let mut w = last.u;
            for s in (1..=t).rev() {
                if s < t {
                    w = mul(&table.gain(line_at(s)).a, w);
                }
                tested += 1;
                let m = w[0].min(w[1]);
                min_entry = min_entry.min(m);
                if !(m > thr) && witness.is_none() {
                    witness = Some(C1Witness { leaf, s, t, product: w });
                    if early_exit {
                        return C1Report { holds: false, tested_pairs: tested, witness, min_entry };
                    }
                }
            }
        }
    }
    C1Report { holds: witness.is_none(), tested_pairs: tested, witness, min_entry }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum MarginValue {
    Finite(f64),
    Infinite,
    AboveCap(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginResult {
    pub eta_star: MarginValue,
    pub bracket_width: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum C1Error {
    #[error("tolerance {0} must be positive")]
    NonpositiveTolerance(f64),
    #[error("cap {0} must be at least 1")]
    InvalidCap(f64),
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
}

/// Largest η for which C1 holds with nameplates scaled by η.
///
/// Relies on C1 being monotone in η, so bisection is valid. The result is
/// the midpoint of the final bracket [lo, hi] with C1 holding at lo and
/// failing at hi; `bracket_width` is half its width.
pub fn c1_margin(
    net: &RadialNetwork,
    portfolio: &DevicePortfolio,
    tol: f64,
    cap: f64,
) -> Result<MarginResult, C1Error> {
    if !(tol > 0.0) {
        return Err(C1Error::NonpositiveTolerance(tol));
    }
    if !(cap >= 1.0) {
        return Err(C1Error::InvalidCap(cap));
    }
    if portfolio.total_pv() == 0.0 && portfolio.total_capacitor() == 0.0 {
        return Ok(MarginResult { eta_star: MarginValue::Infinite, bracket_width: 0.0, evaluations: 0 });
    }
    let mut evaluations = 0;
    let mut holds = |eta: f64| -> Result<bool, C1Error> {
        evaluations += 1;
        Ok(c1_holds(net, &injection_bounds(portfolio, eta)?))
    };
    if !holds(0.0)? {
        // loads alone already break C1 (cannot happen with non-negative loads)
        return Ok(MarginResult { eta_star: MarginValue::Finite(0.0), bracket_width: 0.0, evaluations: 1 });
    }
    let (mut lo, mut hi) = (0.0, 1.0f64);
    while holds(hi)? {
        lo = hi;
        if hi >= cap {
            return Ok(MarginResult { eta_star: MarginValue::AboveCap(cap), bracket_width: 0.0, evaluations });
        }
        hi = (2.0 * hi).min(cap);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if holds(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(MarginResult { eta_star: MarginValue::Finite(0.5 * (lo + hi)), bracket_width: 0.5 * (hi - lo), evaluations })
}

/// Flags for the five closed-form sufficient conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SufficientConditions {
    pub i: bool,
    pub ii: bool,
    pub iii: bool,
    pub iv: bool,
    pub v: bool,
}

impl SufficientConditions {
    pub fn any(&self) -> bool {
        self.i || self.ii || self.iii || self.iv || self.v
    }
}

pub fn check_sufficient_conditions(net: &RadialNetwork, bounds: &InjectionBounds) -> SufficientConditions {
    let table = GainTable::new(net, bounds);
    let (ph, qh) = (&table.p_hat, &table.q_hat);
    let lines: Vec<BusId> = (1..net.bus_count()).map(BusId).collect();
    // lines whose child bus is not a leaf
    let inner: Vec<BusId> = lines.iter().copied().filter(|&i| !net.is_leaf(i)).collect();
    let thr = |i: BusId| table.gain(i).threshold();
    let ratio = |i: BusId| {
        let l = net.line(i);
        l.r / l.x
    };
    let vmin = |i: BusId| net.vmin()[i.0];
    // pairs (i, j) where line i is directly downstream of line j
    let adjacent: Vec<(BusId, BusId)> =
        lines.iter().filter_map(|&i| net.parent(i).filter(|p| !p.is_root()).map(|p| (i, p))).collect();

    let i = inner.iter().all(|&k| ph[k.0] <= 0.0 && qh[k.0] <= 0.0);

    let ii = {
        let r0 = ratio(lines[0]);
        lines.iter().all(|&k| (ratio(k) - r0).abs() <= 1e-12 * r0.max(1.0))
            && inner.iter().all(|&k| {
                let l = net.line(k);
                vmin(k) - 2.0 * l.r * ph[k.0].max(0.0) - 2.0 * l.x * qh[k.0].max(0.0) > thr(k)
            })
    };

    let iii = adjacent.iter().all(|&(d, u)| ratio(d) >= ratio(u))
        && inner.iter().all(|&k| ph[k.0] <= 0.0 && vmin(k) - 2.0 * net.line(k).x * qh[k.0].max(0.0) > thr(k));

    let iv = adjacent.iter().all(|&(d, u)| ratio(d) <= ratio(u))
        && inner.iter().all(|&k| qh[k.0] <= 0.0 && vmin(k) - 2.0 * net.line(k).r * ph[k.0].max(0.0) > thr(k));

    // For every line (i, j): the path product over the lines upstream of j,
    // built from the diagonal factors (1 − 2r P̂⁺/v̲, 1 − 2x Q̂⁺/v̲) with the
    // off-diagonal cross terms bounded by their sum, applied to u of (i, j).
    let v = lines.iter().all(|&k| {
        let l = net.line(k);
        let thr = thr(k);
        let upstream = &net.path(k)[1..];
        let mut d = [1.0, 1.0];
        let mut off = [0.0, 0.0];
        for &m in upstream {
            let lm = net.line(m);
            let g = 2.0 / vmin(m);
            d[0] *= 1.0 - g * lm.r * ph[m.0].max(0.0);
            d[1] *= 1.0 - g * lm.x * qh[m.0].max(0.0);
            off[0] += g * lm.r * qh[m.0].max(0.0);
            off[1] += g * lm.x * ph[m.0].max(0.0);
        }
        let w = [d[0] * l.r - off[0] * l.x, d[1] * l.x - off[1] * l.r];
        w[0] > thr && w[1] > thr
    });

    SufficientConditions { i, ii, iii, iv, v }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{DeviceSpec, Line};
    use approx::assert_relative_eq;

    fn chain(n: usize, r: f64, x: f64) -> RadialNetwork {
        let lines: Vec<Line> = (1..=n).map(|i| Line::new(i, i - 1, r, x)).collect();
        RadialNetwork::with_default_bounds(n + 1, &lines, 1.0).unwrap()
    }

    fn bounds(p: Vec<f64>, q: Vec<f64>) -> InjectionBounds {
        InjectionBounds { p_up: p, q_up: q }
    }

    #[test]
    fn identity_when_bounds_nonpositive() {
        let net = chain(1, 0.01, 0.01);
        let g = underline_a(&net, &bounds(vec![0.0, -1.0], vec![0.0, -1.0]), BusId(1));
        assert_eq!(g.a, [[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn gain_arithmetic() {
        let net = chain(2, 0.01, 0.01);
        // P̂₁ = p̄₁ + p̄₂ = 50
        let b = bounds(vec![0.0, 0.0, 50.0], vec![0.0, 0.0, 50.0]);
        let g = underline_a(&net, &b, BusId(1));
        let k = 2.0 / 0.81 * 0.01 * 50.0;
        assert_relative_eq!(g.a[0][0], 1.0 - 1.2346, epsilon = 1e-4);
        assert_relative_eq!(g.a[0][1], -k, epsilon = 1e-15);
        assert_relative_eq!(g.a[1][0], -1.2346, epsilon = 1e-4);
        let rep = check_c1(&net, &b);
        assert!(!rep.holds);
        let w = rep.witness.unwrap();
        assert_eq!((w.leaf, w.s, w.t), (BusId(2), 1, 2));
        assert!(w.product[0] < 0.0);
    }

    #[test]
    fn single_line_always_holds() {
        let net = chain(1, 0.01, 0.03);
        let rep = check_c1(&net, &bounds(vec![0.0, 1e6], vec![0.0, 1e6]));
        assert!(rep.holds);
        assert_eq!(rep.tested_pairs, 1);
    }

    #[test]
    fn margin_infinite_without_dg() {
        let net = chain(3, 0.01, 0.01);
        let mut pf = DevicePortfolio::new(4);
        pf.add(BusId(2), DeviceSpec::PeakLoad { s_peak: 0.3 }).unwrap();
        let m = c1_margin(&net, &pf, 1e-4, 1e4).unwrap();
        assert_eq!(m.eta_star, MarginValue::Infinite);
        assert!(c1_margin(&net, &pf, 0.0, 1e4).is_err());
    }

    #[test]
    fn margin_brackets_transition() {
        let net = chain(3, 0.01, 0.01);
        let mut pf = DevicePortfolio::new(4);
        pf.add(BusId(3), DeviceSpec::Photovoltaic { s_nameplate: 1.0 }).unwrap();
        let m = c1_margin(&net, &pf, 1e-6, 1e4).unwrap();
        let MarginValue::Finite(eta) = m.eta_star else { panic!("{m:?}") };
        let w = m.bracket_width;
        assert!(c1_holds(&net, &injection_bounds(&pf, eta - w).unwrap()));
        assert!(!c1_holds(&net, &injection_bounds(&pf, eta + w).unwrap()));
    }

    #[test]
    fn margin_above_cap() {
        let net = chain(2, 0.01, 0.01);
        let mut pf = DevicePortfolio::new(3);
        pf.add(BusId(2), DeviceSpec::Photovoltaic { s_nameplate: 1e-6 }).unwrap();
        let m = c1_margin(&net, &pf, 1e-4, 10.0).unwrap();
        assert_eq!(m.eta_star, MarginValue::AboveCap(10.0));
    }

    #[test]
    fn conditions_on_simple_cases() {
        let net = chain(3, 0.01, 0.02);
        let neg = bounds(vec![0.0, -1.0, -1.0, -1.0], vec![0.0, -1.0, -1.0, -1.0]);
        assert!(check_sufficient_conditions(&net, &neg).i);
        let small = bounds(vec![0.0, 0.1, 0.1, 0.1], vec![0.0, 0.1, 0.1, 0.1]);
        let f = check_sufficient_conditions(&net, &small);
        assert!(!f.i && f.ii);
        assert!(check_c1(&net, &small).holds);
    }
}

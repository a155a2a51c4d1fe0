//! Radial network topology, per-unit conversion and device portfolios.
//!
//! Indexing convention used throughout the crate: a network with `n + 1`
//! buses numbers them `0..=n`, bus 0 being the substation. Every non-root bus
//! `i` has exactly one upstream line, so lines are identified by their child
//! bus. Per-bus vectors have length `n + 1`; per-line vectors also have length
//! `n + 1` with slot 0 unused (kept at zero).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::{HashSet, VecDeque};
use std::fmt;
use thiserror::Error;

pub const DEFAULT_VMIN: f64 = 0.81;
pub const DEFAULT_VMAX: f64 = 1.21;
pub const DEFAULT_EPSILON_IMPEDANCE: f64 = 1e-6;
/// Power factor assumed for peak loads.
pub const PEAK_POWER_FACTOR: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BusId(pub usize);

impl BusId {
    pub const ROOT: BusId = BusId(0);

    #[inline]
    pub fn index(self) -> usize {
        self.0
    }

    pub fn is_root(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A line between two buses. After validation `from` is the child and `to`
/// the parent (toward the root).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: BusId,
    pub to: BusId,
    pub r: f64,
    pub x: f64,
}

impl Line {
    pub fn new(from: usize, to: usize, r: f64, x: f64) -> Self {
        Line { from: BusId(from), to: BusId(to), r, x }
    }

    pub fn z(&self) -> Complex64 {
        Complex64::new(self.r, self.x)
    }

    /// |z|²
    pub fn z_norm_sqr(&self) -> f64 {
        self.r * self.r + self.x * self.x
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("network must contain at least the substation bus")]
    Empty,
    #[error("line {line} references bus {bus} outside 0..{bus_count}")]
    UnknownBus { line: usize, bus: usize, bus_count: usize },
    #[error("lines form a cycle (closing line {line})")]
    CycleDetected { line: usize },
    #[error("bus {bus} is not connected to the substation")]
    Disconnected { bus: usize },
    #[error("line {line} has non-positive impedance r={r}, x={x}")]
    NonpositiveImpedance { line: usize, r: f64, x: f64 },
    #[error("bus {bus} has non-positive voltage lower bound {vmin}")]
    NonpositiveVoltageLowerBound { bus: usize, vmin: f64 },
    #[error("bus {bus} has inconsistent voltage bounds [{vmin}, {vmax}]")]
    InvalidVoltageBounds { bus: usize, vmin: f64, vmax: f64 },
    #[error("substation voltage v0={0} must be positive")]
    NonpositiveSubstationVoltage(f64),
    #[error("duplicate line between buses {a} and {b}")]
    DuplicateLine { a: usize, b: usize },
    #[error("bound vector has length {got}, expected {expected}")]
    BoundLength { got: usize, expected: usize },
}

/// Validated radial network. Immutable once built.
#[derive(Debug, Clone, Serialize)]
pub struct RadialNetwork {
    bus_count: usize,
    v0: f64,
    vmin: Vec<f64>,
    vmax: Vec<f64>,
    /// `lines[i]` is the line leaving bus `i`; slot 0 is a placeholder.
    lines: Vec<Line>,
    parent: Vec<Option<BusId>>,
    children: Vec<Vec<BusId>>,
    /// Breadth-first order starting at the root.
    order: Vec<BusId>,
    /// `paths[i]`: lines (by child bus) from bus `i` up to the root.
    paths: Vec<Vec<BusId>>,
    leaves: Vec<BusId>,
}

/// Validates the inputs and orients every line toward bus 0.
///
/// `vmin` / `vmax` are indexed by bus; the entry for bus 0 is ignored.
pub fn build_network(
    bus_count: usize,
    lines: &[Line],
    v0: f64,
    vmin: &[f64],
    vmax: &[f64],
) -> Result<RadialNetwork, NetworkError> {
    if bus_count == 0 {
        return Err(NetworkError::Empty);
    }
    for (got, expected) in [(vmin.len(), bus_count), (vmax.len(), bus_count)] {
        if got != expected {
            return Err(NetworkError::BoundLength { got, expected });
        }
    }
    if !(v0 > 0.0) || !v0.is_finite() {
        return Err(NetworkError::NonpositiveSubstationVoltage(v0));
    }
    for i in 1..bus_count {
        if !(vmin[i] > 0.0) {
            return Err(NetworkError::NonpositiveVoltageLowerBound { bus: i, vmin: vmin[i] });
        }
        if !(vmax[i] >= vmin[i]) {
            return Err(NetworkError::InvalidVoltageBounds { bus: i, vmin: vmin[i], vmax: vmax[i] });
        }
    }

    let mut seen = HashSet::new();
    for (k, l) in lines.iter().enumerate() {
        for b in [l.from.0, l.to.0] {
            if b >= bus_count {
                return Err(NetworkError::UnknownBus { line: k, bus: b, bus_count });
            }
        }
        if !(l.r > 0.0 && l.x > 0.0) || !l.r.is_finite() || !l.x.is_finite() {
            return Err(NetworkError::NonpositiveImpedance { line: k, r: l.r, x: l.x });
        }
        if l.from == l.to {
            return Err(NetworkError::CycleDetected { line: k });
        }
        let key = (l.from.0.min(l.to.0), l.from.0.max(l.to.0));
        if !seen.insert(key) {
            return Err(NetworkError::DuplicateLine { a: key.0, b: key.1 });
        }
    }

    // union-find for cycles
    let mut uf: Vec<usize> = (0..bus_count).collect();
    fn find(uf: &mut [usize], mut a: usize) -> usize {
        while uf[a] != a {
            uf[a] = uf[uf[a]];
            a = uf[a];
        }
        a
    }
    for (k, l) in lines.iter().enumerate() {
        let (ra, rb) = (find(&mut uf, l.from.0), find(&mut uf, l.to.0));
        if ra == rb {
            return Err(NetworkError::CycleDetected { line: k });
        }
        uf[ra] = rb;
    }

    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); bus_count];
    for (k, l) in lines.iter().enumerate() {
        adj[l.from.0].push((l.to.0, k));
        adj[l.to.0].push((l.from.0, k));
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
    }

    let mut parent = vec![None; bus_count];
    let mut oriented = vec![Line::new(0, 0, 0.0, 0.0); bus_count];
    let mut visited = vec![false; bus_count];
    let mut order = Vec::with_capacity(bus_count);
    let mut queue = VecDeque::from([0usize]);
    visited[0] = true;
    while let Some(b) = queue.pop_front() {
        order.push(BusId(b));
        for &(nb, k) in &adj[b] {
            if !visited[nb] {
                visited[nb] = true;
                parent[nb] = Some(BusId(b));
                oriented[nb] = Line { from: BusId(nb), to: BusId(b), r: lines[k].r, x: lines[k].x };
                queue.push_back(nb);
            }
        }
    }
    if let Some(b) = visited.iter().position(|v| !v) {
        return Err(NetworkError::Disconnected { bus: b });
    }

    let mut children = vec![Vec::new(); bus_count];
    for i in 1..bus_count {
        let p = parent[i].expect("non-root bus has a parent");
        children[p.0].push(BusId(i));
    }
    let mut paths: Vec<Vec<BusId>> = vec![Vec::new(); bus_count];
    for &b in order.iter().skip(1) {
        let p = parent[b.0].unwrap();
        let mut path = Vec::with_capacity(paths[p.0].len() + 1);
        path.push(b);
        path.extend_from_slice(&paths[p.0]);
        paths[b.0] = path;
    }
    let leaves = (1..bus_count).filter(|&i| children[i].is_empty()).map(BusId).collect();

    let mut vmin = vmin.to_vec();
    let mut vmax = vmax.to_vec();
    vmin[0] = v0;
    vmax[0] = v0;

    Ok(RadialNetwork { bus_count, v0, vmin, vmax, lines: oriented, parent, children, order, paths, leaves })
}

impl RadialNetwork {
    /// Builds with the default bounds 0.81 ≤ v ≤ 1.21 at every bus.
    pub fn with_default_bounds(bus_count: usize, lines: &[Line], v0: f64) -> Result<Self, NetworkError> {
        let vmin = vec![DEFAULT_VMIN; bus_count];
        let vmax = vec![DEFAULT_VMAX; bus_count];
        build_network(bus_count, lines, v0, &vmin, &vmax)
    }

    /// Number of buses including the substation (`n + 1`).
    pub fn bus_count(&self) -> usize {
        self.bus_count
    }

    /// Number of lines (`n`).
    pub fn line_count(&self) -> usize {
        self.bus_count - 1
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn vmin(&self) -> &[f64] {
        &self.vmin
    }

    pub fn vmax(&self) -> &[f64] {
        &self.vmax
    }

    /// Line leaving bus `i` toward the root. Panics for the root.
    pub fn line(&self, i: BusId) -> &Line {
        assert!(!i.is_root(), "the substation has no upstream line");
        &self.lines[i.0]
    }

    /// Oriented lines in child-bus order.
    pub fn lines(&self) -> impl Iterator<Item = &Line> + '_ {
        self.lines[1..].iter()
    }

    pub fn parent(&self, i: BusId) -> Option<BusId> {
        self.parent[i.0]
    }

    pub fn children(&self, i: BusId) -> &[BusId] {
        &self.children[i.0]
    }

    /// Buses in breadth-first order from the root (root first).
    pub fn topo_order(&self) -> &[BusId] {
        &self.order
    }

    /// Lines (identified by child bus) from `i` to the root; empty for bus 0.
    pub fn path(&self, i: BusId) -> &[BusId] {
        &self.paths[i.0]
    }

    pub fn leaves(&self) -> &[BusId] {
        &self.leaves
    }

    /// Path length of a leaf (`n_l`).
    pub fn depth(&self, i: BusId) -> usize {
        self.paths[i.0].len()
    }

    pub fn is_leaf(&self, i: BusId) -> bool {
        !i.is_root() && self.children[i.0].is_empty()
    }

    pub fn buses(&self) -> impl Iterator<Item = BusId> {
        (0..self.bus_count).map(BusId)
    }

    /// Copy of the network with new voltage bounds.
    pub fn with_bounds(&self, vmin: &[f64], vmax: &[f64]) -> Result<Self, NetworkError> {
        build_network(self.bus_count, self.lines().copied().collect::<Vec<_>>().as_slice(), self.v0, vmin, vmax)
    }
}

/// Base quantities for per-unit conversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseUnits {
    pub s_base: f64,
    pub v_base: f64,
    pub z_base: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaseError {
    #[error("base quantities must be positive (s={s_base}, v={v_base}, z={z_base})")]
    Nonpositive { s_base: f64, v_base: f64, z_base: f64 },
    #[error("z_base {z_base} Ω differs from v²/s = {expected} Ω by more than 0.5%")]
    Inconsistent { z_base: f64, expected: f64 },
}

impl BaseUnits {
    /// `s_base` in MVA, `v_base` in kV.
    pub fn new(s_base: f64, v_base: f64) -> Result<Self, BaseError> {
        Self::with_z_base(s_base, v_base, v_base * v_base / s_base)
    }

    /// Uses a tabulated impedance base, which must agree with v²/s to 0.5%.
    pub fn with_z_base(s_base: f64, v_base: f64, z_base: f64) -> Result<Self, BaseError> {
        if !(s_base > 0.0 && v_base > 0.0 && z_base > 0.0) {
            return Err(BaseError::Nonpositive { s_base, v_base, z_base });
        }
        let expected = v_base * v_base / s_base;
        if ((z_base - expected) / expected).abs() > 5e-3 {
            return Err(BaseError::Inconsistent { z_base, expected });
        }
        Ok(BaseUnits { s_base, v_base, z_base })
    }

    /// MW / MVAR / MVA to per-unit.
    pub fn power_pu(&self, mva: f64) -> f64 {
        mva / self.s_base
    }
}

pub fn to_per_unit(ohms: f64, base: &BaseUnits) -> f64 {
    ohms / base.z_base
}

/// Per-unit device models. Loads are stored as positive consumption.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviceSpec {
    FixedLoad {
        p: f64,
        q: f64,
    },
    /// Apparent peak power, split with a 0.9 power factor.
    PeakLoad {
        s_peak: f64,
    },
    /// Continuously adjustable shunt capacitor, 0 ≤ q ≤ q_cap.
    Capacitor {
        q_cap: f64,
    },
    /// Switched capacitor with the discrete set {0, q_cap}. Only the
    /// feasibility test understands it; the conic builder rejects it.
    SwitchedCapacitor {
        q_cap: f64,
    },
    /// Inverter-interfaced PV: Re ≥ 0, |s| ≤ s_nameplate.
    Photovoltaic {
        s_nameplate: f64,
    },
}

impl DeviceSpec {
    /// Consumption (p, q) of a load device; zero for everything else.
    pub fn load(&self) -> (f64, f64) {
        match *self {
            DeviceSpec::FixedLoad { p, q } => (p, q),
            DeviceSpec::PeakLoad { s_peak } => peak_split(s_peak),
            _ => (0.0, 0.0),
        }
    }

    fn nameplate(&self) -> f64 {
        match *self {
            DeviceSpec::Capacitor { q_cap } | DeviceSpec::SwitchedCapacitor { q_cap } => q_cap,
            DeviceSpec::Photovoltaic { s_nameplate } => s_nameplate,
            _ => 0.0,
        }
    }

    /// Copy with capacitor / PV nameplates multiplied by `eta`.
    pub fn scaled(&self, eta: f64) -> Self {
        match *self {
            DeviceSpec::Capacitor { q_cap } => DeviceSpec::Capacitor { q_cap: eta * q_cap },
            DeviceSpec::SwitchedCapacitor { q_cap } => DeviceSpec::SwitchedCapacitor { q_cap: eta * q_cap },
            DeviceSpec::Photovoltaic { s_nameplate } => DeviceSpec::Photovoltaic { s_nameplate: eta * s_nameplate },
            other => other,
        }
    }
}

/// (p, q) consumption of a peak load at power factor 0.9.
pub fn peak_split(s_peak: f64) -> (f64, f64) {
    let phi = PEAK_POWER_FACTOR.acos();
    (s_peak * phi.cos(), s_peak * phi.sin())
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PortfolioError {
    #[error("devices cannot be attached to the substation bus")]
    SubstationDevice,
    #[error("bus {bus} outside 0..{bus_count}")]
    UnknownBus { bus: usize, bus_count: usize },
    #[error("device parameter must be finite and non-negative: {0:?}")]
    InvalidParameter(DeviceSpec),
    #[error("scale factor {0} must be non-negative")]
    NegativeScale(f64),
}

/// Devices attached to each bus.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DevicePortfolio {
    devices: Vec<Vec<DeviceSpec>>,
}

impl DevicePortfolio {
    pub fn new(bus_count: usize) -> Self {
        DevicePortfolio { devices: vec![Vec::new(); bus_count] }
    }

    pub fn add(&mut self, bus: BusId, device: DeviceSpec) -> Result<(), PortfolioError> {
        if bus.is_root() {
            return Err(PortfolioError::SubstationDevice);
        }
        if bus.0 >= self.devices.len() {
            return Err(PortfolioError::UnknownBus { bus: bus.0, bus_count: self.devices.len() });
        }
        let ok = match device {
            DeviceSpec::FixedLoad { p, q } => p.is_finite() && q.is_finite(),
            _ => {
                let (p, q) = device.load();
                let v = device.nameplate();
                p >= 0.0 && q >= 0.0 && v >= 0.0 && v.is_finite() && p.is_finite()
            }
        };
        if !ok {
            return Err(PortfolioError::InvalidParameter(device));
        }
        self.devices[bus.0].push(device);
        Ok(())
    }

    pub fn bus_count(&self) -> usize {
        self.devices.len()
    }

    pub fn at(&self, bus: BusId) -> &[DeviceSpec] {
        &self.devices[bus.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (BusId, &DeviceSpec)> + '_ {
        self.devices.iter().enumerate().flat_map(|(b, d)| d.iter().map(move |d| (BusId(b), d)))
    }

    /// Copy with capacitor and PV nameplates multiplied by `eta`.
    pub fn scaled(&self, eta: f64) -> Result<Self, PortfolioError> {
        if !(eta >= 0.0) {
            return Err(PortfolioError::NegativeScale(eta));
        }
        Ok(DevicePortfolio {
            devices: self.devices.iter().map(|d| d.iter().map(|x| x.scaled(eta)).collect()).collect(),
        })
    }

    pub fn total_pv(&self) -> f64 {
        self.iter()
            .filter_map(|(_, d)| match d {
                DeviceSpec::Photovoltaic { s_nameplate } => Some(*s_nameplate),
                _ => None,
            })
            .sum()
    }

    pub fn total_capacitor(&self) -> f64 {
        self.iter()
            .filter_map(|(_, d)| match d {
                DeviceSpec::Capacitor { q_cap } | DeviceSpec::SwitchedCapacitor { q_cap } => Some(*q_cap),
                _ => None,
            })
            .sum()
    }

    /// Σ over buses of (p, q) consumption.
    pub fn total_load(&self) -> (f64, f64) {
        self.iter().fold((0.0, 0.0), |(a, b), (_, d)| {
            let (p, q) = d.load();
            (a + p, b + q)
        })
    }

    /// Per-bus constant injection from loads (negative consumption).
    pub fn fixed_injection(&self) -> Vec<Complex64> {
        self.devices
            .iter()
            .map(|d| {
                d.iter().fold(Complex64::new(0.0, 0.0), |acc, dev| {
                    let (p, q) = dev.load();
                    acc - Complex64::new(p, q)
                })
            })
            .collect()
    }
}

/// Upper bounds (p̄, q̄) on the injections, per bus (slot 0 is zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionBounds {
    pub p_up: Vec<f64>,
    pub q_up: Vec<f64>,
}

/// p̄ᵢ(η) = −load_p + η·PV, q̄ᵢ(η) = −load_q + η·(PV + capacitor).
pub fn injection_bounds(portfolio: &DevicePortfolio, eta: f64) -> Result<InjectionBounds, PortfolioError> {
    if !(eta >= 0.0) {
        return Err(PortfolioError::NegativeScale(eta));
    }
    let n = portfolio.bus_count();
    let mut p_up = vec![0.0; n];
    let mut q_up = vec![0.0; n];
    for (b, d) in portfolio.iter() {
        let (lp, lq) = d.load();
        p_up[b.0] -= lp;
        q_up[b.0] -= lq;
        match *d {
            DeviceSpec::Photovoltaic { s_nameplate } => {
                p_up[b.0] += eta * s_nameplate;
                q_up[b.0] += eta * s_nameplate;
            }
            DeviceSpec::Capacitor { q_cap } | DeviceSpec::SwitchedCapacitor { q_cap } => {
                q_up[b.0] += eta * q_cap;
            }
            _ => {}
        }
    }
    Ok(InjectionBounds { p_up, q_up })
}

const FEASIBILITY_TOL: f64 = 1e-9;

/// Whether every `s[i]` (i ≥ 1) is a sum of admissible device injections.
pub fn injection_feasible(portfolio: &DevicePortfolio, s: &[Complex64]) -> bool {
    let fixed = portfolio.fixed_injection();
    (1..portfolio.bus_count()).all(|i| {
        let si = s.get(i).copied().unwrap_or_default();
        bus_feasible(portfolio.at(BusId(i)), si - fixed[i])
    })
}

/// `d` is the injection left after removing fixed loads.
fn bus_feasible(devices: &[DeviceSpec], d: Complex64) -> bool {
    let tol = FEASIBILITY_TOL * (1.0 + d.norm());
    let mut radius = 0.0;
    let mut q_cont = 0.0;
    let mut switched = Vec::new();
    for dev in devices {
        match *dev {
            DeviceSpec::Photovoltaic { s_nameplate } => radius += s_nameplate,
            DeviceSpec::Capacitor { q_cap } => q_cont += q_cap,
            DeviceSpec::SwitchedCapacitor { q_cap } => switched.push(q_cap),
            _ => {}
        }
    }
    // Half-disks add up to a half-disk whose radius is the sum of radii.
    if d.re < -tol {
        return false;
    }
    let mut offsets = vec![0.0f64];
    for q in switched {
        let mut next = offsets.clone();
        next.extend(offsets.iter().map(|o| o + q));
        next.sort_by(f64::total_cmp);
        next.dedup_by(|a, b| (*a - *b).abs() <= tol);
        offsets = next;
    }
    offsets.iter().any(|&o| {
        let q_cap = (d.im - o).clamp(0.0, q_cont) + o;
        let rest = Complex64::new(d.re.max(0.0), d.im - q_cap);
        rest.norm() <= radius + tol
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn chain3() -> RadialNetwork {
        RadialNetwork::with_default_bounds(3, &[Line::new(1, 0, 0.01, 0.02), Line::new(2, 1, 0.01, 0.02)], 1.0).unwrap()
    }

    #[test]
    fn smallest_tree() {
        let net = RadialNetwork::with_default_bounds(2, &[Line::new(1, 0, 0.01, 0.02)], 1.0).unwrap();
        assert_eq!(net.leaves(), &[BusId(1)]);
        assert_eq!(net.path(BusId(1)), &[BusId(1)]);
        assert_eq!(net.line(BusId(1)).to, BusId(0));
    }

    #[test]
    fn chain_path() {
        let net = chain3();
        assert_eq!(net.path(BusId(2)), &[BusId(2), BusId(1)]);
        assert_eq!(net.depth(BusId(2)), 2);
        assert_eq!(net.leaves(), &[BusId(2)]);
    }

    #[test]
    fn reverse_orientation_is_fixed() {
        let net =
            RadialNetwork::with_default_bounds(3, &[Line::new(0, 1, 0.01, 0.02), Line::new(1, 2, 0.01, 0.02)], 1.0)
                .unwrap();
        assert_eq!(net.line(BusId(2)).to, BusId(1));
        assert_eq!(net.parent(BusId(1)), Some(BusId(0)));
    }

    #[test]
    fn rejects_bad_inputs() {
        let e = RadialNetwork::with_default_bounds(2, &[Line::new(1, 0, 0.0, 0.02)], 1.0).unwrap_err();
        assert!(matches!(e, NetworkError::NonpositiveImpedance { .. }));
        let e = RadialNetwork::with_default_bounds(
            3,
            &[Line::new(1, 0, 0.1, 0.1), Line::new(2, 1, 0.1, 0.1), Line::new(2, 0, 0.1, 0.1)],
            1.0,
        )
        .unwrap_err();
        assert!(matches!(e, NetworkError::CycleDetected { .. }));
        let e = RadialNetwork::with_default_bounds(3, &[Line::new(1, 0, 0.1, 0.1)], 1.0).unwrap_err();
        assert!(matches!(e, NetworkError::Disconnected { bus: 2 }));
        let e = RadialNetwork::with_default_bounds(2, &[Line::new(1, 0, 0.1, 0.1), Line::new(0, 1, 0.1, 0.1)], 1.0)
            .unwrap_err();
        assert!(matches!(e, NetworkError::DuplicateLine { .. }));
        let e = build_network(2, &[Line::new(1, 0, 0.1, 0.1)], 1.0, &[0.81, 0.0], &[1.21, 1.21]).unwrap_err();
        assert!(matches!(e, NetworkError::NonpositiveVoltageLowerBound { bus: 1, .. }));
    }

    #[test]
    fn per_unit() {
        assert_eq!(to_per_unit(0.0, &BaseUnits::new(1.0, 12.0).unwrap()), 0.0);
        let b = BaseUnits::with_z_base(1.0, 12.0, 144.0).unwrap();
        assert_relative_eq!(to_per_unit(0.160, &b), 0.160 / 144.0);
        assert_relative_eq!(to_per_unit(0.160, &b), 0.0011111, epsilon = 1e-7);
        let b = BaseUnits::new(1.0, 12.35).unwrap();
        assert_relative_eq!(b.z_base, 152.5225, epsilon = 1e-9);
        assert_relative_eq!(to_per_unit(0.259, &b), 0.0016981, epsilon = 1e-7);
        assert!(BaseUnits::with_z_base(1.0, 12.0, 150.0).is_err());
    }

    #[test]
    fn bounds_examples() {
        let mut pf = DevicePortfolio::new(4);
        pf.add(BusId(1), DeviceSpec::PeakLoad { s_peak: 0.057 }).unwrap();
        pf.add(BusId(2), DeviceSpec::Photovoltaic { s_nameplate: 5.0 }).unwrap();
        pf.add(BusId(3), DeviceSpec::Capacitor { q_cap: 0.6 }).unwrap();
        let b = injection_bounds(&pf, 1.0).unwrap();
        assert_relative_eq!(b.p_up[1], -0.0513, epsilon = 1e-12);
        assert_relative_eq!(b.q_up[1], -0.057 * 0.19f64.sqrt(), epsilon = 1e-12);
        assert!((b.q_up[1] + 0.024847).abs() < 2e-6);
        assert_eq!((b.p_up[2], b.q_up[2]), (5.0, 5.0));
        assert_eq!((b.p_up[3], b.q_up[3]), (0.0, 0.6));
        let b0 = injection_bounds(&pf, 0.0).unwrap();
        assert_eq!((b0.p_up[2], b0.q_up[2], b0.q_up[3]), (0.0, 0.0, 0.0));
        assert!(matches!(injection_bounds(&pf, -1.0), Err(PortfolioError::NegativeScale(_))));
        assert!(pf.add(BusId(0), DeviceSpec::Capacitor { q_cap: 1.0 }).is_err());
    }

    #[test]
    fn feasibility_examples() {
        let mut pf = DevicePortfolio::new(3);
        pf.add(BusId(1), DeviceSpec::FixedLoad { p: 0.1, q: 0.05 }).unwrap();
        pf.add(BusId(2), DeviceSpec::Photovoltaic { s_nameplate: 1.0 }).unwrap();
        let c = |a, b| Complex64::new(a, b);
        assert!(injection_feasible(&pf, &[c(0.0, 0.0), c(-0.1, -0.05), c(0.8, 0.6)]));
        assert!(!injection_feasible(&pf, &[c(0.0, 0.0), c(-0.1, -0.05), c(-0.1, 0.0)]));
        assert!(!injection_feasible(&pf, &[c(0.0, 0.0), c(-0.1, -0.04), c(0.0, 0.0)]));
    }

    #[test]
    fn capacitor_and_pv_combined() {
        let mut pf = DevicePortfolio::new(2);
        pf.add(BusId(1), DeviceSpec::Capacitor { q_cap: 0.5 }).unwrap();
        pf.add(BusId(1), DeviceSpec::Photovoltaic { s_nameplate: 1.0 }).unwrap();
        let c = |a, b| Complex64::new(a, b);
        assert!(injection_feasible(&pf, &[c(0.0, 0.0), c(0.0, 1.5)]));
        assert!(!injection_feasible(&pf, &[c(0.0, 0.0), c(0.0, 1.6)]));
        assert!(injection_feasible(&pf, &[c(0.0, 0.0), c(0.0, -1.0)]));
        assert!(!injection_feasible(&pf, &[c(0.0, 0.0), c(0.0, -1.1)]));

        let mut sw = DevicePortfolio::new(2);
        sw.add(BusId(1), DeviceSpec::SwitchedCapacitor { q_cap: 0.5 }).unwrap();
        assert!(injection_feasible(&sw, &[c(0.0, 0.0), c(0.0, 0.5)]));
        assert!(!injection_feasible(&sw, &[c(0.0, 0.0), c(0.0, 0.25)]));
    }
}

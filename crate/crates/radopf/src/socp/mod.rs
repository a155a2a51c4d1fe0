//! OPF conic relaxations over the branch flow model and the embedded
//! interior-point solver.
//!
//! [`build_problem`] produces a [`ConicProblem`] whose rotated cones
//! vᵢ·ℓᵢ ≥ Pᵢ² + Qᵢ² are kept in that form; the conversion to standard
//! second-order cones happens in [`ConicProblem::to_standard_form`].

pub mod cone;
pub mod ldl;
mod polish;
pub mod solver;

use crate::exactness::{verify, ExactnessError, ExactnessReport, DEFAULT_EXACTNESS_TOL};
use crate::lindistflow::svolt_rows;
use crate::netmodel::{BusId, DevicePortfolio, DeviceSpec, RadialNetwork};
use crate::powerflow::FlowState;
use cone::{ConeBlock, ConeKind};
use num_complex::Complex64;
use serde::Serialize;
pub use solver::{ConicSolution, Residuals, SolveStatus, SolverError, SolverOptions, SparseRows, StandardForm};
use thiserror::Error;

/// Per-bus generation cost fᵢ(pᵢ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Cost {
    Linear(f64),
    /// a·p² + b·p with a ≥ 0
    Quadratic {
        a: f64,
        b: f64,
    },
}

impl Cost {
    pub fn eval(&self, p: f64) -> f64 {
        match *self {
            Cost::Linear(k) => k * p,
            Cost::Quadratic { a, b } => a * p * p + b * p,
        }
    }
}

/// Costs for every bus, slot 0 being the substation cost f₀.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Objective {
    pub costs: Vec<Cost>,
}

impl Objective {
    /// Σᵢ pᵢ including p₀, which equals the total line loss.
    pub fn loss(bus_count: usize) -> Self {
        Objective { costs: vec![Cost::Linear(1.0); bus_count] }
    }

    fn validate(&self, bus_count: usize) -> Result<(), BuildError> {
        if self.costs.len() != bus_count {
            return Err(BuildError::ObjectiveLength { got: self.costs.len(), expected: bus_count });
        }
        for (i, c) in self.costs.iter().enumerate() {
            let ok = match *c {
                Cost::Linear(k) => k.is_finite() && (i != 0 || k > 0.0),
                Cost::Quadratic { a, b } => {
                    a >= 0.0 && a.is_finite() && b.is_finite() && (i != 0 || a > 0.0 || b > 0.0)
                }
            };
            if !ok {
                return Err(BuildError::InvalidCost { bus: i });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Variant {
    /// v ≤ v̄
    Socp,
    /// v̂(s) ≤ v̄
    SocpM,
    /// v ≤ v̄ − ε
    OpfEps(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BuildError {
    #[error("device {0:?} has a nonconvex injection set")]
    NonconvexDevice(DeviceSpec),
    #[error("portfolio covers {got} buses, network has {expected}")]
    PortfolioSize { got: usize, expected: usize },
    #[error("objective has {got} entries, expected {expected}")]
    ObjectiveLength { got: usize, expected: usize },
    #[error("cost at bus {bus} is invalid (f0 must be strictly increasing)")]
    InvalidCost { bus: usize },
    #[error("epsilon {0} must be non-negative")]
    NegativeEpsilon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DeviceVar {
    Capacitor { bus: BusId, q: usize, q_cap: f64 },
    Photovoltaic { bus: BusId, p: usize, q: usize, s_nameplate: f64 },
}

/// Column offsets of each named variable group. Per-bus groups hold buses
/// 1..=n at offsets `group + i − 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableLayout {
    pub lines: usize,
    pub p: usize,
    pub q: usize,
    pub big_p: usize,
    pub big_q: usize,
    pub v: usize,
    pub ell: usize,
    pub p0: usize,
    pub q0: usize,
    pub devices: Vec<DeviceVar>,
    /// (bus, epigraph variable) for quadratic costs
    pub epigraph: Vec<(BusId, usize)>,
    pub count: usize,
}

impl VariableLayout {
    fn new(lines: usize) -> Self {
        let n = lines;
        VariableLayout {
            lines: n,
            p: 0,
            q: n,
            big_p: 2 * n,
            big_q: 3 * n,
            v: 4 * n,
            ell: 5 * n,
            p0: 6 * n,
            q0: 6 * n + 1,
            devices: Vec::new(),
            epigraph: Vec::new(),
            count: 6 * n + 2,
        }
    }

    fn alloc(&mut self) -> usize {
        self.count += 1;
        self.count - 1
    }

    /// Column of pᵢ (i ≥ 1) or p₀.
    pub fn p_of(&self, i: BusId) -> usize {
        if i.is_root() {
            self.p0
        } else {
            self.p + i.0 - 1
        }
    }

    pub fn q_of(&self, i: BusId) -> usize {
        if i.is_root() {
            self.q0
        } else {
            self.q + i.0 - 1
        }
    }

    pub fn big_p_of(&self, i: BusId) -> usize {
        self.big_p + i.0 - 1
    }

    pub fn big_q_of(&self, i: BusId) -> usize {
        self.big_q + i.0 - 1
    }

    pub fn v_of(&self, i: BusId) -> usize {
        self.v + i.0 - 1
    }

    pub fn ell_of(&self, i: BusId) -> usize {
        self.ell + i.0 - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RowTag {
    BranchFlowP(BusId),
    BranchFlowQ(BusId),
    SubstationP,
    SubstationQ,
    VoltageDrop(BusId),
    InjectionP(BusId),
    InjectionQ(BusId),
    VoltageLower(BusId),
    VoltageUpper(BusId),
    LinearVoltage(BusId),
    CapacitorLower(usize),
    CapacitorUpper(usize),
    PvReal(usize),
    SubstationDomain,
}

/// Σ coeffs·x = rhs (equalities) or ≤ rhs (inequalities).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
    pub tag: RowTag,
}

impl LinearRow {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(c, a)| a * x[c]).sum()
    }
}

/// v·ℓ ≥ P² + Q² with v, ℓ ≥ 0, for one line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RotatedCone {
    pub line: BusId,
    pub v: usize,
    pub ell: usize,
    pub rest: [usize; 2],
}

/// Affine expression Σ coeffs·x + constant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Affine {
    pub coeffs: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    fn var(c: usize, k: f64) -> Self {
        Affine { coeffs: vec![(c, k)], constant: 0.0 }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().map(|&(c, a)| a * x[c]).sum::<f64>()
    }
}

/// t ≥ ‖x‖ over affine expressions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormCone {
    pub t: Affine,
    pub x: Vec<Affine>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConicProblem {
    pub variant: Variant,
    pub layout: VariableLayout,
    pub objective: Vec<f64>,
    /// Rows of the branch flow equations.
    pub flow_equalities: Vec<LinearRow>,
    /// Rows tying bus injections to device injections.
    pub injection_equalities: Vec<LinearRow>,
    pub inequalities: Vec<LinearRow>,
    pub rotated: Vec<RotatedCone>,
    pub norm_cones: Vec<NormCone>,
}

pub fn build_problem(
    net: &RadialNetwork,
    portfolio: &DevicePortfolio,
    objective: &Objective,
    variant: Variant,
) -> Result<ConicProblem, BuildError> {
    let nb = net.bus_count();
    if portfolio.bus_count() != nb {
        return Err(BuildError::PortfolioSize { got: portfolio.bus_count(), expected: nb });
    }
    objective.validate(nb)?;
    if let Variant::OpfEps(eps) = variant {
        if !(eps >= 0.0) {
            return Err(BuildError::NegativeEpsilon(eps));
        }
    }
    let mut lay = VariableLayout::new(net.line_count());
    let mut flow = Vec::new();
    let mut inj = Vec::new();
    let mut ineq = Vec::new();
    let mut norm_cones = Vec::new();

    // branch flow equations, line by line
    for i in (1..nb).map(BusId) {
        let kids = net.children(i);
        let mut rp = vec![(lay.big_p_of(i), 1.0), (lay.p_of(i), -1.0)];
        let mut rq = vec![(lay.big_q_of(i), 1.0), (lay.q_of(i), -1.0)];
        for &h in kids {
            let lh = net.line(h);
            rp.extend([(lay.big_p_of(h), -1.0), (lay.ell_of(h), lh.r)]);
            rq.extend([(lay.big_q_of(h), -1.0), (lay.ell_of(h), lh.x)]);
        }
        flow.push(LinearRow { coeffs: rp, rhs: 0.0, tag: RowTag::BranchFlowP(i) });
        flow.push(LinearRow { coeffs: rq, rhs: 0.0, tag: RowTag::BranchFlowQ(i) });
    }
    {
        let mut rp = vec![(lay.p0, 1.0)];
        let mut rq = vec![(lay.q0, 1.0)];
        for &h in net.children(BusId::ROOT) {
            let lh = net.line(h);
            rp.extend([(lay.big_p_of(h), 1.0), (lay.ell_of(h), -lh.r)]);
            rq.extend([(lay.big_q_of(h), 1.0), (lay.ell_of(h), -lh.x)]);
        }
        flow.push(LinearRow { coeffs: rp, rhs: 0.0, tag: RowTag::SubstationP });
        flow.push(LinearRow { coeffs: rq, rhs: 0.0, tag: RowTag::SubstationQ });
    }
    for i in (1..nb).map(BusId) {
        let l = net.line(i);
        let mut row = vec![
            (lay.v_of(i), 1.0),
            (lay.big_p_of(i), -2.0 * l.r),
            (lay.big_q_of(i), -2.0 * l.x),
            (lay.ell_of(i), l.z_norm_sqr()),
        ];
        let rhs = if l.to.is_root() {
            net.v0()
        } else {
            row.push((lay.v_of(l.to), -1.0));
            0.0
        };
        flow.push(LinearRow { coeffs: row, rhs, tag: RowTag::VoltageDrop(i) });
    }

    // devices
    for i in (1..nb).map(BusId) {
        let mut rp = vec![(lay.p_of(i), 1.0)];
        let mut rq = vec![(lay.q_of(i), 1.0)];
        let (mut lp, mut lq) = (0.0, 0.0);
        for dev in portfolio.at(i) {
            let (a, b) = dev.load();
            lp += a;
            lq += b;
            match *dev {
                DeviceSpec::FixedLoad { .. } | DeviceSpec::PeakLoad { .. } => {}
                DeviceSpec::SwitchedCapacitor { .. } => return Err(BuildError::NonconvexDevice(*dev)),
                DeviceSpec::Capacitor { q_cap } => {
                    let q = lay.alloc();
                    let k = lay.devices.len();
                    lay.devices.push(DeviceVar::Capacitor { bus: i, q, q_cap });
                    rq.push((q, -1.0));
                    ineq.push(LinearRow { coeffs: vec![(q, -1.0)], rhs: 0.0, tag: RowTag::CapacitorLower(k) });
                    ineq.push(LinearRow { coeffs: vec![(q, 1.0)], rhs: q_cap, tag: RowTag::CapacitorUpper(k) });
                }
                DeviceSpec::Photovoltaic { s_nameplate } => {
                    let (p, q) = (lay.alloc(), lay.alloc());
                    let k = lay.devices.len();
                    lay.devices.push(DeviceVar::Photovoltaic { bus: i, p, q, s_nameplate });
                    rp.push((p, -1.0));
                    rq.push((q, -1.0));
                    ineq.push(LinearRow { coeffs: vec![(p, -1.0)], rhs: 0.0, tag: RowTag::PvReal(k) });
                    norm_cones.push(NormCone {
                        t: Affine { coeffs: vec![], constant: s_nameplate },
                        x: vec![Affine::var(p, 1.0), Affine::var(q, 1.0)],
                    });
                }
            }
        }
        inj.push(LinearRow { coeffs: rp, rhs: -lp, tag: RowTag::InjectionP(i) });
        inj.push(LinearRow { coeffs: rq, rhs: -lq, tag: RowTag::InjectionQ(i) });
    }

    // voltage bounds
    for i in (1..nb).map(BusId) {
        ineq.push(LinearRow { coeffs: vec![(lay.v_of(i), -1.0)], rhs: -net.vmin()[i.0], tag: RowTag::VoltageLower(i) });
    }
    match variant {
        Variant::Socp | Variant::OpfEps(_) => {
            let eps = if let Variant::OpfEps(e) = variant { e } else { 0.0 };
            for i in (1..nb).map(BusId) {
                ineq.push(LinearRow {
                    coeffs: vec![(lay.v_of(i), 1.0)],
                    rhs: net.vmax()[i.0] - eps,
                    tag: RowTag::VoltageUpper(i),
                });
            }
        }
        Variant::SocpM => {
            for row in svolt_rows(net) {
                let mut coeffs = Vec::new();
                for j in 1..nb {
                    if row.p_coef[j] != 0.0 {
                        coeffs.push((lay.p_of(BusId(j)), row.p_coef[j]));
                    }
                    if row.q_coef[j] != 0.0 {
                        coeffs.push((lay.q_of(BusId(j)), row.q_coef[j]));
                    }
                }
                ineq.push(LinearRow { coeffs, rhs: row.vmax - row.constant, tag: RowTag::LinearVoltage(row.bus) });
            }
        }
    }

    let rotated = (1..nb)
        .map(BusId)
        .map(|i| RotatedCone { line: i, v: lay.v_of(i), ell: lay.ell_of(i), rest: [lay.big_p_of(i), lay.big_q_of(i)] })
        .collect();

    // objective, with epigraph variables for quadratic costs
    let mut obj_terms: Vec<(usize, f64)> = Vec::new();
    for (i, cost) in objective.costs.iter().enumerate() {
        let pc = lay.p_of(BusId(i));
        match *cost {
            Cost::Linear(k) => obj_terms.push((pc, k)),
            Cost::Quadratic { a, b } => {
                obj_terms.push((pc, b));
                if a > 0.0 {
                    let t = lay.alloc();
                    lay.epigraph.push((BusId(i), t));
                    obj_terms.push((t, 1.0));
                    // a p² ≤ t  ⇔  ‖(2√a p, t − 1)‖ ≤ t + 1
                    norm_cones.push(NormCone {
                        t: Affine { coeffs: vec![(t, 1.0)], constant: 1.0 },
                        x: vec![Affine::var(pc, 2.0 * a.sqrt()), Affine { coeffs: vec![(t, 1.0)], constant: -1.0 }],
                    });
                    if i == 0 {
                        // keep p₀ where f₀ is increasing
                        ineq.push(LinearRow {
                            coeffs: vec![(pc, -1.0)],
                            rhs: b / (2.0 * a),
                            tag: RowTag::SubstationDomain,
                        });
                    }
                }
            }
        }
    }
    let mut c = vec![0.0; lay.count];
    for (col, k) in obj_terms {
        c[col] += k;
    }
    Ok(ConicProblem {
        variant,
        layout: lay,
        objective: c,
        flow_equalities: flow,
        injection_equalities: inj,
        inequalities: ineq,
        rotated,
        norm_cones,
    })
}

impl ConicProblem {
    pub fn variable_count(&self) -> usize {
        self.layout.count
    }

    pub fn to_standard_form(&self) -> StandardForm {
        let n = self.layout.count;
        let mut a = SparseRows::new(n);
        let mut b = Vec::new();
        for r in self.flow_equalities.iter().chain(&self.injection_equalities) {
            a.push_row(r.coeffs.clone());
            b.push(r.rhs);
        }
        let mut g = SparseRows::new(n);
        let mut h = Vec::new();
        let mut cones = Vec::new();
        for r in &self.inequalities {
            g.push_row(r.coeffs.clone());
            h.push(r.rhs);
        }
        if !self.inequalities.is_empty() {
            cones.push(ConeBlock { kind: ConeKind::Nonneg, offset: 0, dim: self.inequalities.len() });
        }
        // s = h − Gx must equal the cone expression
        let push_affine = |g: &mut SparseRows, h: &mut Vec<f64>, e: &Affine| {
            g.push_row(e.coeffs.iter().map(|&(c, k)| (c, -k)).collect());
            h.push(e.constant);
        };
        for rc in &self.rotated {
            let off = g.len();
            let rows = [
                Affine { coeffs: vec![(rc.v, 1.0), (rc.ell, 1.0)], constant: 0.0 },
                Affine { coeffs: vec![(rc.v, 1.0), (rc.ell, -1.0)], constant: 0.0 },
                Affine::var(rc.rest[0], 2.0),
                Affine::var(rc.rest[1], 2.0),
            ];
            for r in &rows {
                push_affine(&mut g, &mut h, r);
            }
            cones.push(ConeBlock { kind: ConeKind::Soc, offset: off, dim: 4 });
        }
        for nc in &self.norm_cones {
            let off = g.len();
            push_affine(&mut g, &mut h, &nc.t);
            for e in &nc.x {
                push_affine(&mut g, &mut h, e);
            }
            cones.push(ConeBlock { kind: ConeKind::Soc, offset: off, dim: 1 + nc.x.len() });
        }
        StandardForm { c: self.objective.clone(), a, b, g, h, cones }
    }

    /// Branch flow variables of a primal vector.
    pub fn extract_state(&self, net: &RadialNetwork, x: &[f64]) -> FlowState {
        let lay = &self.layout;
        let mut st = FlowState::zero(net);
        for i in (1..net.bus_count()).map(BusId) {
            st.s[i.0] = Complex64::new(x[lay.p_of(i)], x[lay.q_of(i)]);
            st.flow[i.0] = Complex64::new(x[lay.big_p_of(i)], x[lay.big_q_of(i)]);
            st.v[i.0] = x[lay.v_of(i)];
            st.ell[i.0] = x[lay.ell_of(i)];
        }
        st.s0 = Complex64::new(x[lay.p0], x[lay.q0]);
        st
    }

    /// Largest violation of any constraint at `x` (absolute).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for r in self.flow_equalities.iter().chain(&self.injection_equalities) {
            worst = worst.max((r.eval(x) - r.rhs).abs());
        }
        for r in &self.inequalities {
            worst = worst.max(r.eval(x) - r.rhs);
        }
        for rc in &self.rotated {
            let (v, l, p, q) = (x[rc.v], x[rc.ell], x[rc.rest[0]], x[rc.rest[1]]);
            worst = worst.max(-v).max(-l).max(p * p + q * q - v * l);
        }
        for nc in &self.norm_cones {
            let t = nc.t.eval(x);
            let nrm = nc.x.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
            worst = worst.max(nrm - t);
        }
        worst
    }

    /// Linear objective cᵀx of a full primal vector.
    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

pub fn solve(problem: &ConicProblem, options: &SolverOptions) -> Result<ConicSolution, SolverError> {
    solver::solve(&problem.to_standard_form(), options)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpfOutcome {
    pub state: FlowState,
    pub solution: ConicSolution,
    pub exactness: ExactnessReport,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpfError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("solver finished with status {status:?}")]
    NotOptimal { status: SolveStatus, solution: Box<ConicSolution> },
    #[error(transparent)]
    Exactness(#[from] ExactnessError),
}

/// Options suited to OPF instances: the gap is driven far enough down that
/// cones on near-zero-impedance lines become tight to the exactness tolerance.
pub fn opf_solver_options() -> SolverOptions {
    SolverOptions { gap_tol: 1e-12, ..SolverOptions::default() }
}

pub fn solve_opf(
    net: &RadialNetwork,
    portfolio: &DevicePortfolio,
    objective: &Objective,
    variant: Variant,
    options: &SolverOptions,
) -> Result<OpfOutcome, OpfError> {
    let problem = build_problem(net, portfolio, objective, variant)?;
    let solution = solve(&problem, options)?;
    if solution.status != SolveStatus::Optimal {
        return Err(OpfError::NotOptimal { status: solution.status, solution: Box::new(solution) });
    }
    let state = problem.extract_state(net, &solution.x);
    let exactness = verify(net, &state, DEFAULT_EXACTNESS_TOL)?;
    Ok(OpfOutcome { state, solution, exactness })
}

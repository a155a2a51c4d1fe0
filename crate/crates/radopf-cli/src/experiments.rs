//! Experiment drivers behind the CLI subcommands.

use crate::netfile::{Dataset, NetfileError};
use num_complex::Complex64;
use radopf::c1cond::{
    c1_margin, check_c1, check_sufficient_conditions, C1Error, C1Witness, MarginValue, SufficientConditions,
    DEFAULT_MARGIN_CAP,
};
use radopf::exactness::{construct_point, ConstructionTrace, ExactnessError, ExactnessReport};
use radopf::lindistflow::{hat_v, in_svolt};
use radopf::netmodel::{injection_bounds, injection_feasible, BusId, DevicePortfolio, DeviceSpec, PortfolioError};
use radopf::powerflow::{
    residuals, sweep_solve, sweep_solve_with_excess, PowerFlowError, ResidualReport, SweepOptions,
};
use radopf::socp::{
    opf_solver_options, solve_opf, Objective, OpfError, Residuals, SolveStatus, SolverOptions, Variant,
};
use radopf::FlowState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::time::Instant;
use thiserror::Error;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Netfile(#[from] NetfileError),
    #[error(transparent)]
    C1(#[from] C1Error),
    #[error(transparent)]
    Opf(#[from] OpfError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
    #[error(transparent)]
    Exactness(#[from] ExactnessError),
    #[error("none of the {samples} samples produced a feasible power flow")]
    NoFeasibleSamples { samples: usize },
    #[error("{0}")]
    InvalidArgument(String),
}

/// Wall-clock durations, kept apart so the rest of a report is reproducible.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Timing {
    pub seconds: BTreeMap<String, f64>,
}

impl Timing {
    fn record(&mut self, key: &str, start: Instant) {
        self.seconds.insert(key.to_string(), start.elapsed().as_secs_f64());
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MarginSection {
    pub eta_star: MarginValue,
    pub bracket_width: f64,
    pub evaluations: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct C1Section {
    pub eta: f64,
    pub holds: bool,
    pub tested_pairs: usize,
    pub min_entry: f64,
    /// Leaf and path positions of the first failing product, with file labels.
    pub witness: Option<WitnessLabels>,
    pub conditions: SufficientConditions,
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessLabels {
    pub leaf: u64,
    pub s: usize,
    pub t: usize,
    pub product: [f64; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSection {
    pub variant: Variant,
    pub eta: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub objective: f64,
    pub losses: f64,
    pub kkt: Residuals,
    pub exact: bool,
    pub max_gap: f64,
    pub worst_line: Option<u64>,
    /// ‖v_socp − v_pf‖∞ after re-solving the power flow at the optimal s.
    pub roundtrip_v_error: f64,
    pub state: FlowState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapSample {
    pub index: usize,
    pub converged: bool,
    pub feasible: bool,
    /// ‖v̂(s) − v‖∞ when feasible.
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub samples: usize,
    pub feasible_samples: usize,
    pub eps_estimate: f64,
    pub seed: u64,
    pub records: Vec<GapSample>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PowerFlowSection {
    pub eta: f64,
    pub state: FlowState,
    pub residuals: ResidualReport,
    pub losses: f64,
    pub linear_voltage_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub network: String,
    pub seed: Option<u64>,
    pub margin: Option<MarginSection>,
    pub c1: Option<C1Section>,
    pub solve: Option<SolveSection>,
    pub powerflow: Option<PowerFlowSection>,
    pub construction: Option<ConstructionTrace>,
    pub exactness: Option<ExactnessReport>,
    pub gap: Option<GapReport>,
    pub timing: Timing,
}

impl ExperimentReport {
    pub fn new(ds: &Dataset) -> Self {
        ExperimentReport {
            schema_version: REPORT_SCHEMA_VERSION,
            tool_version: TOOL_VERSION.to_string(),
            network: ds.name.clone(),
            seed: None,
            margin: None,
            c1: None,
            solve: None,
            powerflow: None,
            construction: None,
            exactness: None,
            gap: None,
            timing: Timing::default(),
        }
    }

    /// JSON without the timing block, for determinism comparisons.
    pub fn deterministic_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("timing");
        }
        serde_json::to_string_pretty(&v).expect("value serializes")
    }
}

pub fn run_margin_experiment(ds: &Dataset, tol: f64) -> Result<ExperimentReport, ExperimentError> {
    let mut rep = ExperimentReport::new(ds);
    let t = Instant::now();
    let m = c1_margin(&ds.network, &ds.portfolio, tol, DEFAULT_MARGIN_CAP)?;
    rep.timing.record("margin", t);
    rep.margin =
        Some(MarginSection { eta_star: m.eta_star, bracket_width: m.bracket_width, evaluations: m.evaluations, tol });
    rep.c1 = Some(c1_section(ds, 1.0)?);
    Ok(rep)
}

pub fn run_c1_check(ds: &Dataset, eta: f64) -> Result<ExperimentReport, ExperimentError> {
    let mut rep = ExperimentReport::new(ds);
    let t = Instant::now();
    rep.c1 = Some(c1_section(ds, eta)?);
    rep.timing.record("check_c1", t);
    Ok(rep)
}

fn c1_section(ds: &Dataset, eta: f64) -> Result<C1Section, ExperimentError> {
    let bounds = injection_bounds(&ds.portfolio, eta)?;
    let r = check_c1(&ds.network, &bounds);
    let witness =
        r.witness.map(|w: C1Witness| WitnessLabels { leaf: ds.labels[w.leaf.0], s: w.s, t: w.t, product: w.product });
    Ok(C1Section {
        eta,
        holds: r.holds,
        tested_pairs: r.tested_pairs,
        min_entry: r.min_entry,
        witness,
        conditions: check_sufficient_conditions(&ds.network, &bounds),
    })
}

pub fn run_exactness_experiment(ds: &Dataset, variant: Variant, eta: f64) -> Result<ExperimentReport, ExperimentError> {
    run_exactness_with(ds, variant, eta, &opf_solver_options())
}

pub fn run_exactness_with(
    ds: &Dataset,
    variant: Variant,
    eta: f64,
    options: &SolverOptions,
) -> Result<ExperimentReport, ExperimentError> {
    let mut rep = ExperimentReport::new(ds);
    let pf = ds.portfolio.scaled(eta)?;
    let net = &ds.network;
    let t = Instant::now();
    let out = solve_opf(net, &pf, &Objective::loss(net.bus_count()), variant, options)?;
    rep.timing.record("solve", t);
    let t = Instant::now();
    let pf_state = sweep_solve(net, &out.state.s, &SweepOptions::default())?;
    rep.timing.record("roundtrip", t);
    let roundtrip = out.state.v.iter().zip(&pf_state.v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    rep.solve = Some(SolveSection {
        variant,
        eta,
        status: out.solution.status,
        iterations: out.solution.iterations,
        objective: out.solution.primal_objective,
        losses: out.state.losses(net),
        kkt: out.solution.residuals,
        exact: out.exactness.exact,
        max_gap: out.exactness.max_gap,
        worst_line: out.exactness.worst_line.map(|b| ds.labels[b.0]),
        roundtrip_v_error: roundtrip,
        state: out.state,
    });
    Ok(rep)
}

/// Nominal injection: loads plus every PV at nameplate real output and every
/// capacitor at nameplate, all DG scaled by `eta`.
pub fn nominal_injection(pf: &DevicePortfolio, eta: f64) -> Vec<Complex64> {
    let mut s = pf.fixed_injection();
    for (b, d) in pf.iter() {
        match *d {
            DeviceSpec::Photovoltaic { s_nameplate } => s[b.0].re += eta * s_nameplate,
            DeviceSpec::Capacitor { q_cap } | DeviceSpec::SwitchedCapacitor { q_cap } => s[b.0].im += eta * q_cap,
            _ => {}
        }
    }
    s
}

pub fn run_powerflow_experiment(ds: &Dataset, eta: f64) -> Result<ExperimentReport, ExperimentError> {
    if !(eta >= 0.0) {
        return Err(ExperimentError::InvalidArgument(format!("eta {eta} must be non-negative")));
    }
    let mut rep = ExperimentReport::new(ds);
    let s = nominal_injection(&ds.portfolio, eta);
    let t = Instant::now();
    let st = sweep_solve(&ds.network, &s, &SweepOptions::default())?;
    rep.timing.record("powerflow", t);
    let vh = hat_v(&ds.network, &s);
    let gap = vh.iter().zip(&st.v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    rep.powerflow = Some(PowerFlowSection {
        eta,
        residuals: residuals(&ds.network, &st),
        losses: st.losses(&ds.network),
        linear_voltage_gap: gap,
        state: st,
    });
    Ok(rep)
}

/// Builds a relaxed point at the nominal injection by adding `delta` to ℓ on
/// `line` (file label of the line's downstream bus) and runs the
/// feasible-point construction on it.
pub fn run_construct_experiment(
    ds: &Dataset,
    eta: f64,
    line: Option<u64>,
    delta: f64,
) -> Result<ExperimentReport, ExperimentError> {
    let net = &ds.network;
    let bus = match line {
        Some(l) => ds
            .bus_of(l)
            .filter(|b| !b.is_root())
            .ok_or_else(|| ExperimentError::InvalidArgument(format!("no line ends at bus {l}")))?,
        None => net.leaves()[0],
    };
    if !(delta > 0.0) {
        return Err(ExperimentError::InvalidArgument(format!("delta {delta} must be positive")));
    }
    let mut rep = ExperimentReport::new(ds);
    let s = nominal_injection(&ds.portfolio.scaled(eta)?, 1.0);
    let mut excess = vec![0.0; net.bus_count()];
    excess[bus.0] = delta;
    let st = sweep_solve_with_excess(net, &s, Some(&excess), &SweepOptions::default())?;
    let t = Instant::now();
    rep.construction = Some(construct_point(net, &st, &Objective::loss(net.bus_count()))?);
    rep.timing.record("construct", t);
    Ok(rep)
}

/// Draws one injection vector: loads fixed, capacitors uniform on [0, q̄],
/// switched capacitors on/off with equal odds, PV uniform on its half-disk.
pub fn sample_injection<R: Rng>(pf: &DevicePortfolio, rng: &mut R) -> Vec<Complex64> {
    let mut s = pf.fixed_injection();
    for (b, d) in pf.iter() {
        match *d {
            DeviceSpec::Capacitor { q_cap } => s[b.0].im += rng.random_range(0.0..=q_cap),
            DeviceSpec::SwitchedCapacitor { q_cap } => {
                if rng.random_bool(0.5) {
                    s[b.0].im += q_cap;
                }
            }
            DeviceSpec::Photovoltaic { s_nameplate: r } if r > 0.0 => loop {
                let p: f64 = rng.random_range(0.0..=r);
                let q: f64 = rng.random_range(-r..=r);
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

/// ε(s) = ‖v̂(s) − v(s)‖∞ over non-root buses.
pub fn linear_voltage_gap(ds: &Dataset, s: &[Complex64], st: &FlowState) -> f64 {
    let vh = hat_v(&ds.network, s);
    (1..ds.network.bus_count()).map(|i| (vh[i] - st.v[i]).abs()).fold(0.0, f64::max)
}

pub fn evaluate_gap_sample(ds: &Dataset, seed: u64, index: usize) -> GapSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let s = sample_injection(&ds.portfolio, &mut rng);
    let net = &ds.network;
    match sweep_solve(net, &s, &SweepOptions::default()) {
        Err(_) => GapSample { index, converged: false, feasible: false, eps: None },
        Ok(st) => {
            let in_bounds = (1..net.bus_count()).all(|i| st.v[i] >= net.vmin()[i] && st.v[i] <= net.vmax()[i]);
            let feasible = in_bounds && injection_feasible(&ds.portfolio, &s);
            let eps = feasible.then(|| linear_voltage_gap(ds, &s, &st));
            GapSample { index, converged: true, feasible, eps }
        }
    }
}

pub fn run_gap_experiment(ds: &Dataset, samples: usize, seed: u64) -> Result<GapReport, ExperimentError> {
    if samples == 0 {
        return Err(ExperimentError::InvalidArgument("samples must be at least 1".into()));
    }
    let records: Vec<GapSample> = (0..samples).into_par_iter().map(|i| evaluate_gap_sample(ds, seed, i)).collect();
    let feasible: Vec<f64> = records.iter().filter_map(|r| r.eps).collect();
    if feasible.is_empty() {
        return Err(ExperimentError::NoFeasibleSamples { samples });
    }
    Ok(GapReport {
        samples,
        feasible_samples: feasible.len(),
        eps_estimate: feasible.iter().copied().fold(0.0, f64::max),
        seed,
        records,
    })
}

pub fn run_gap_report(ds: &Dataset, samples: usize, seed: u64) -> Result<ExperimentReport, ExperimentError> {
    let mut rep = ExperimentReport::new(ds);
    let t = Instant::now();
    rep.gap = Some(run_gap_experiment(ds, samples, seed)?);
    rep.timing.record("gap", t);
    rep.seed = Some(seed);
    Ok(rep)
}

/// Margin, C1 at unit scale, SOCP-m solve and modification gap in one report.
pub fn run_full_report(ds: &Dataset, tol: f64, samples: usize, seed: u64) -> Result<ExperimentReport, ExperimentError> {
    let mut rep = run_margin_experiment(ds, tol)?;
    let solved = run_exactness_experiment(ds, Variant::SocpM, 1.0)?;
    let gap = run_gap_report(ds, samples, seed)?;
    rep.solve = solved.solve;
    rep.gap = gap.gap;
    rep.seed = Some(seed);
    rep.timing.seconds.extend(solved.timing.seconds);
    rep.timing.seconds.extend(gap.timing.seconds);
    Ok(rep)
}

/// Whether the nominal injection lies in the linear-voltage feasible set.
pub fn nominal_in_svolt(ds: &Dataset, eta: f64) -> bool {
    in_svolt(&ds.network, &nominal_injection(&ds.portfolio, eta)).inside
}

/// Bus label for an internal index.
pub fn label_of(ds: &Dataset, b: BusId) -> u64 {
    ds.labels[b.0]
}

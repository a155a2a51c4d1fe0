//! Plain-text network description.
//!
//! ```text
//! # comment
//! [base]
//! s_mva 1.0
//! v_kv 12.35
//! z_ohm 152.5        # optional, must agree with v_kv²/s_mva to 0.5%
//! epsilon 1e-6       # optional, pu impedance substituted for zero entries
//!
//! [substation]
//! bus 1
//! v0 1.0             # squared voltage, pu²
//! regulator 1.0      # optional voltage-magnitude factor, v0 is scaled by its square
//!
//! [buses]            # optional
//! default 0.81 1.21
//! 17 0.85 1.21       # bus vmin vmax (pu²)
//!
//! [lines]
//! units ohm          # or pu
//! 1 2 0.259 0.808    # bus bus r x
//!
//! [devices]
//! 11 peak_load 0.67  # MVA at power factor 0.9
//! 12 load 0.4 0.1    # MW MVAR consumed
//! 3 capacitor 1.2    # MVAR
//! 4 switched_capacitor 0.6
//! 13 pv 1.5          # MVA nameplate
//! ```
//!
//! Bus labels are non-negative integers. The substation becomes bus 0; the
//! remaining labels are numbered 1.. in ascending order. Devices listed at the
//! substation are kept for reference but do not enter the portfolio.

use radopf::netmodel::{
    build_network, to_per_unit, BaseError, BaseUnits, BusId, DevicePortfolio, DeviceSpec, Line, NetworkError,
    PortfolioError, RadialNetwork, DEFAULT_EPSILON_IMPEDANCE, DEFAULT_VMAX, DEFAULT_VMIN,
};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetfileError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid network: {0}")]
    Validation(#[from] NetworkError),
    #[error("invalid base: {0}")]
    Base(#[from] BaseError),
    #[error("invalid device: {0}")]
    Portfolio(#[from] PortfolioError),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("unknown dataset {0:?} (expected sce47 or sce56)")]
    UnknownDataset(String),
}

/// A parsed network with its devices and the mapping back to file labels.
#[derive(Debug, Clone, Serialize)]
pub struct Dataset {
    pub name: String,
    pub network: RadialNetwork,
    pub portfolio: DevicePortfolio,
    pub base: BaseUnits,
    /// `labels[i]` is the file label of internal bus i.
    pub labels: Vec<u64>,
    pub substation_devices: Vec<DeviceSpec>,
    /// Lines whose zero resistance or reactance was replaced by epsilon.
    pub patched_lines: usize,
}

impl Dataset {
    pub fn bus_of(&self, label: u64) -> Option<BusId> {
        self.labels.iter().position(|&l| l == label).map(BusId)
    }

    /// Capacitor nameplate including devices listed at the substation.
    pub fn total_capacitor_all(&self) -> f64 {
        self.portfolio.total_capacitor()
            + self
                .substation_devices
                .iter()
                .map(|d| match d {
                    DeviceSpec::Capacitor { q_cap } | DeviceSpec::SwitchedCapacitor { q_cap } => *q_cap,
                    _ => 0.0,
                })
                .sum::<f64>()
    }
}

const SCE47: &str = include_str!("../data/sce47.net");
const SCE56: &str = include_str!("../data/sce56.net");

pub fn embedded_dataset(name: &str) -> Result<Dataset, NetfileError> {
    let text = match name {
        "sce47" => SCE47,
        "sce56" => SCE56,
        _ => return Err(NetfileError::UnknownDataset(name.to_string())),
    };
    parse_network(name, text)
}

pub fn load_network_file(path: &Path) -> Result<Dataset, NetfileError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| NetfileError::Io { path: path.display().to_string(), source })?;
    let name = path.file_stem().map_or_else(|| "network".to_string(), |s| s.to_string_lossy().into_owned());
    parse_network(&name, &text)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Base,
    Substation,
    Buses,
    Lines,
    Devices,
}

#[derive(Clone, Copy, PartialEq)]
enum Units {
    Ohm,
    Pu,
}

struct RawDevice {
    line: usize,
    bus: u64,
    spec: DeviceSpec,
}

fn perr(line: usize, reason: impl Into<String>) -> NetfileError {
    NetfileError::Parse { line, reason: reason.into() }
}

fn num(line: usize, tok: &str) -> Result<f64, NetfileError> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(perr(line, format!("expected a number, found {tok:?}"))),
    }
}

fn label(line: usize, tok: &str) -> Result<u64, NetfileError> {
    tok.parse().map_err(|_| perr(line, format!("expected a bus label, found {tok:?}")))
}

fn arity(line: usize, toks: &[&str], n: usize) -> Result<(), NetfileError> {
    if toks.len() != n {
        return Err(perr(line, format!("expected {n} fields, found {}", toks.len())));
    }
    Ok(())
}

pub fn parse_network(name: &str, text: &str) -> Result<Dataset, NetfileError> {
    let mut section = Section::None;
    let mut s_mva = None;
    let mut v_kv = None;
    let mut z_ohm = None;
    let mut epsilon = DEFAULT_EPSILON_IMPEDANCE;
    let mut sub_bus = None;
    let mut v0 = None;
    let mut regulator = 1.0;
    let mut default_bounds = (DEFAULT_VMIN, DEFAULT_VMAX);
    let mut bus_bounds: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    let mut units = None;
    let mut raw_lines: Vec<(usize, u64, u64, f64, f64)> = Vec::new();
    let mut raw_devices = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let ln = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(h) = body.strip_prefix('[') {
            let h = h.strip_suffix(']').ok_or_else(|| perr(ln, "unterminated section header"))?;
            section = match h.trim() {
                "base" => Section::Base,
                "substation" => Section::Substation,
                "buses" => Section::Buses,
                "lines" => Section::Lines,
                "devices" => Section::Devices,
                other => return Err(perr(ln, format!("unknown section [{other}]"))),
            };
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        match section {
            Section::None => return Err(perr(ln, "content before the first section")),
            Section::Base => {
                arity(ln, &toks, 2)?;
                let v = num(ln, toks[1])?;
                match toks[0] {
                    "s_mva" => s_mva = Some(v),
                    "v_kv" => v_kv = Some(v),
                    "z_ohm" => z_ohm = Some(v),
                    "epsilon" if v > 0.0 => epsilon = v,
                    "epsilon" => return Err(perr(ln, "epsilon must be positive")),
                    k => return Err(perr(ln, format!("unknown base key {k:?}"))),
                }
            }
            Section::Substation => {
                arity(ln, &toks, 2)?;
                match toks[0] {
                    "bus" => sub_bus = Some(label(ln, toks[1])?),
                    "v0" => v0 = Some(num(ln, toks[1])?),
                    "regulator" => regulator = num(ln, toks[1])?,
                    k => return Err(perr(ln, format!("unknown substation key {k:?}"))),
                }
            }
            Section::Buses => {
                arity(ln, &toks, 3)?;
                let b = (num(ln, toks[1])?, num(ln, toks[2])?);
                if toks[0] == "default" {
                    default_bounds = b;
                } else if bus_bounds.insert(label(ln, toks[0])?, b).is_some() {
                    return Err(perr(ln, format!("bus {} listed twice", toks[0])));
                }
            }
            Section::Lines => {
                if toks[0] == "units" {
                    arity(ln, &toks, 2)?;
                    let u = match toks[1] {
                        "ohm" => Units::Ohm,
                        "pu" => Units::Pu,
                        o => return Err(perr(ln, format!("unknown units {o:?}"))),
                    };
                    if units.is_some_and(|prev| prev != u) {
                        return Err(perr(ln, "ohm and pu impedances cannot be mixed"));
                    }
                    units = Some(u);
                    continue;
                }
                arity(ln, &toks, 4)?;
                let (r, x) = (num(ln, toks[2])?, num(ln, toks[3])?);
                if r < 0.0 || x < 0.0 {
                    return Err(perr(ln, "negative impedance"));
                }
                raw_lines.push((ln, label(ln, toks[0])?, label(ln, toks[1])?, r, x));
            }
            Section::Devices => {
                if toks.len() < 3 {
                    return Err(perr(ln, "expected: bus kind value..."));
                }
                let bus = label(ln, toks[0])?;
                let vals = toks[2..].iter().map(|t| num(ln, t)).collect::<Result<Vec<_>, _>>()?;
                let need = if toks[1] == "load" { 2 } else { 1 };
                if vals.len() != need {
                    return Err(perr(ln, format!("{} takes {need} value(s)", toks[1])));
                }
                let spec = match toks[1] {
                    "load" => DeviceSpec::FixedLoad { p: vals[0], q: vals[1] },
                    "peak_load" => DeviceSpec::PeakLoad { s_peak: vals[0] },
                    "capacitor" => DeviceSpec::Capacitor { q_cap: vals[0] },
                    "switched_capacitor" => DeviceSpec::SwitchedCapacitor { q_cap: vals[0] },
                    "pv" => DeviceSpec::Photovoltaic { s_nameplate: vals[0] },
                    k => return Err(perr(ln, format!("unknown device kind {k:?}"))),
                };
                raw_devices.push(RawDevice { line: ln, bus, spec });
            }
        }
    }

    let missing = |what: &str| perr(0, format!("missing {what}"));
    let (s_mva, v_kv) = (s_mva.ok_or_else(|| missing("[base] s_mva"))?, v_kv.ok_or_else(|| missing("[base] v_kv"))?);
    let base = match z_ohm {
        Some(z) => BaseUnits::with_z_base(s_mva, v_kv, z)?,
        None => BaseUnits::new(s_mva, v_kv)?,
    };
    let sub = sub_bus.ok_or_else(|| missing("[substation] bus"))?;
    let v0 = v0.ok_or_else(|| missing("[substation] v0"))? * regulator * regulator;
    let units = if raw_lines.is_empty() { Units::Pu } else { units.ok_or_else(|| missing("[lines] units"))? };

    let mut all: BTreeSet<u64> = raw_lines.iter().flat_map(|l| [l.1, l.2]).collect();
    all.remove(&sub);
    let labels: Vec<u64> = std::iter::once(sub).chain(all).collect();
    let index: BTreeMap<u64, usize> = labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();

    let mut patched_lines = 0;
    let mut lines = Vec::with_capacity(raw_lines.len());
    for &(_, a, b, r, x) in &raw_lines {
        let (mut r, mut x) = match units {
            Units::Ohm => (to_per_unit(r, &base), to_per_unit(x, &base)),
            Units::Pu => (r, x),
        };
        if r == 0.0 || x == 0.0 {
            patched_lines += 1;
            if r == 0.0 {
                r = epsilon;
            }
            if x == 0.0 {
                x = epsilon;
            }
        }
        lines.push(Line::new(index[&a], index[&b], r, x));
    }

    let n = labels.len();
    let mut vmin = vec![default_bounds.0; n];
    let mut vmax = vec![default_bounds.1; n];
    for (l, (lo, hi)) in bus_bounds {
        let i = *index.get(&l).ok_or_else(|| perr(0, format!("[buses] names unknown bus {l}")))?;
        vmin[i] = lo;
        vmax[i] = hi;
    }
    let network = build_network(n, &lines, v0, &vmin, &vmax)?;

    let mut portfolio = DevicePortfolio::new(n);
    let mut substation_devices = Vec::new();
    for d in raw_devices {
        let spec = to_pu(d.spec, &base);
        if d.bus == sub {
            substation_devices.push(spec);
            continue;
        }
        let i = *index.get(&d.bus).ok_or_else(|| perr(d.line, format!("device on unknown bus {}", d.bus)))?;
        portfolio.add(BusId(i), spec)?;
    }

    Ok(Dataset { name: name.to_string(), network, portfolio, base, labels, substation_devices, patched_lines })
}

fn to_pu(d: DeviceSpec, base: &BaseUnits) -> DeviceSpec {
    let f = |v: f64| base.power_pu(v);
    match d {
        DeviceSpec::FixedLoad { p, q } => DeviceSpec::FixedLoad { p: f(p), q: f(q) },
        DeviceSpec::PeakLoad { s_peak } => DeviceSpec::PeakLoad { s_peak: f(s_peak) },
        DeviceSpec::Capacitor { q_cap } => DeviceSpec::Capacitor { q_cap: f(q_cap) },
        DeviceSpec::SwitchedCapacitor { q_cap } => DeviceSpec::SwitchedCapacitor { q_cap: f(q_cap) },
        DeviceSpec::Photovoltaic { s_nameplate } => DeviceSpec::Photovoltaic { s_nameplate: f(s_nameplate) },
    }
}

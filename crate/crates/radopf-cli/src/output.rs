//! JSON and CSV emission.

use crate::experiments::ExperimentReport;
use crate::netfile::Dataset;
use radopf::c1cond::MarginValue;
use std::io;
use std::path::Path;

pub fn write_json(report: &ExperimentReport, path: &Path) -> io::Result<()> {
    let text = serde_json::to_string_pretty(report).map_err(io::Error::other)?;
    std::fs::write(path, text + "\n")
}

/// Flat table: a header row and string cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

fn margin_text(m: &MarginValue) -> (String, String) {
    match m {
        MarginValue::Finite(v) => ("finite".into(), v.to_string()),
        MarginValue::Infinite => ("infinite".into(), String::new()),
        MarginValue::AboveCap(c) => ("above_cap".into(), c.to_string()),
    }
}

/// The most detailed table the report supports: per-sample gap records,
/// per-bus solve or power-flow state, or a one-row margin summary.
pub fn report_table(report: &ExperimentReport, ds: &Dataset) -> Option<Table> {
    if let Some(g) = &report.gap {
        return Some(Table {
            header: vec!["sample", "converged", "feasible", "eps"],
            rows: g
                .records
                .iter()
                .map(|r| {
                    vec![
                        r.index.to_string(),
                        r.converged.to_string(),
                        r.feasible.to_string(),
                        r.eps.map_or(String::new(), |e| e.to_string()),
                    ]
                })
                .collect(),
        });
    }
    let state = report.solve.as_ref().map(|s| &s.state).or(report.powerflow.as_ref().map(|p| &p.state));
    if let Some(st) = state {
        return Some(Table {
            header: vec!["bus", "p", "q", "P", "Q", "v", "ell"],
            rows: (0..ds.network.bus_count())
                .map(|i| {
                    let s = if i == 0 { st.s0 } else { st.s[i] };
                    [s.re, s.im, st.flow[i].re, st.flow[i].im, st.v[i], st.ell[i]].iter().map(|v| v.to_string()).fold(
                        vec![ds.labels[i].to_string()],
                        |mut acc, v| {
                            acc.push(v);
                            acc
                        },
                    )
                })
                .collect(),
        });
    }
    if let Some(m) = &report.margin {
        let (kind, value) = margin_text(&m.eta_star);
        return Some(Table {
            header: vec!["network", "margin_kind", "eta_star", "bracket_width", "evaluations"],
            rows: vec![vec![
                report.network.clone(),
                kind,
                value,
                m.bracket_width.to_string(),
                m.evaluations.to_string(),
            ]],
        });
    }
    report.c1.as_ref().map(|c| Table {
        header: vec!["network", "eta", "holds", "min_entry", "i", "ii", "iii", "iv", "v"],
        rows: vec![vec![
            report.network.clone(),
            c.eta.to_string(),
            c.holds.to_string(),
            c.min_entry.to_string(),
            c.conditions.i.to_string(),
            c.conditions.ii.to_string(),
            c.conditions.iii.to_string(),
            c.conditions.iv.to_string(),
            c.conditions.v.to_string(),
        ]],
    })
}

pub fn write_csv(table: &Table, path: &Path) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&table.header)?;
    for r in &table.rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

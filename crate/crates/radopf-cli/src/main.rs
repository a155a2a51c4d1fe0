use clap::{Args, Parser, Subcommand, ValueEnum};
use radopf::c1cond::{MarginValue, DEFAULT_MARGIN_TOL};
use radopf::exactness::{verify, DEFAULT_EXACTNESS_TOL};
use radopf::socp::Variant;
use radopf::FlowState;
use radopf_cli::experiments::{self, ExperimentError, ExperimentReport};
use radopf_cli::netfile::{embedded_dataset, load_network_file, Dataset};
use radopf_cli::output::{report_table, write_csv, write_json};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Args, Clone)]
struct Common {
    /// Network description file
    #[arg(long, conflicts_with = "dataset", global = true)]
    network: Option<PathBuf>,
    /// Embedded dataset (sce47, sce56)
    #[arg(long, global = true)]
    dataset: Option<String>,
    /// Write the JSON report here instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write a flat CSV table here
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    /// Exit with status 1 on a negative analysis result
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Socp,
    Socpm,
    Opfeps,
}

#[derive(Args, Clone)]
struct SolveArgs {
    #[arg(long, value_enum, default_value = "socpm")]
    variant: VariantArg,
    /// Voltage tightening for opfeps
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    /// DG / capacitor nameplate scale
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
}

impl SolveArgs {
    fn variant(&self) -> Variant {
        match self.variant {
            VariantArg::Socp => Variant::Socp,
            VariantArg::Socpm => Variant::SocpM,
            VariantArg::Opfeps => Variant::OpfEps(self.eps),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate C1 and the sufficient conditions at one scale
    CheckC1 {
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
    },
    /// Largest DG scale keeping C1
    Margin {
        #[arg(long, default_value_t = DEFAULT_MARGIN_TOL)]
        tol: f64,
    },
    /// Solve a relaxation and verify exactness
    Solve {
        #[command(flatten)]
        args: SolveArgs,
    },
    /// Forward-backward sweep at the nominal injection
    Powerflow {
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
    },
    /// Check exactness of a state file, or of a fresh solve when none is given
    Verify {
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_EXACTNESS_TOL)]
        tol: f64,
        #[command(flatten)]
        args: SolveArgs,
    },
    /// Inflate ℓ on one line and build the improved feasible point
    Construct {
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        /// Label of the bus whose upstream line is inflated (default: first leaf)
        #[arg(long)]
        line: Option<u64>,
        #[arg(long, default_value_t = 1e-3)]
        delta: f64,
    },
    /// Monte Carlo estimate of the linear voltage gap
    Gap {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Margin, SOCP-m solve and gap in one report
    Report {
        #[arg(long, default_value_t = DEFAULT_MARGIN_TOL)]
        tol: f64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Parser)]
#[command(name = "radopf", version, about = "Optimal power flow relaxations on radial networks")]
struct Top {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

fn load(c: &Common) -> Result<Dataset, ExperimentError> {
    match (&c.network, &c.dataset) {
        (Some(p), _) => Ok(load_network_file(p)?),
        (None, Some(d)) => Ok(embedded_dataset(d)?),
        (None, None) => Err(ExperimentError::InvalidArgument("pass --network <path> or --dataset <name>".into())),
    }
}

/// Runs the command; the flag is true when the analysis came out negative.
fn run(top: &Top) -> Result<(ExperimentReport, Dataset, bool, String), Box<dyn std::error::Error>> {
    let ds = load(&top.common)?;
    let (rep, negative, summary) = match &top.command {
        Command::CheckC1 { eta } => {
            let rep = experiments::run_c1_check(&ds, *eta)?;
            let c = rep.c1.as_ref().expect("c1 section");
            let s = format!(
                "C1 {} at eta = {eta} (min entry {:.3e})",
                if c.holds { "holds" } else { "fails" },
                c.min_entry
            );
            let neg = !c.holds;
            (rep, neg, s)
        }
        Command::Margin { tol } => {
            let rep = experiments::run_margin_experiment(&ds, *tol)?;
            let m = rep.margin.as_ref().expect("margin section");
            let s = match m.eta_star {
                MarginValue::Finite(v) => format!("C1 margin eta* = {v:.4}"),
                MarginValue::Infinite => "C1 margin is infinite (no DG or capacitors)".to_string(),
                MarginValue::AboveCap(c) => format!("C1 margin exceeds {c}"),
            };
            let neg = matches!(m.eta_star, MarginValue::Finite(v) if v < 1.0);
            (rep, neg, s)
        }
        Command::Solve { args } => {
            let rep = experiments::run_exactness_experiment(&ds, args.variant(), args.eta)?;
            let s = rep.solve.as_ref().expect("solve section");
            let text = format!(
                "{:?}: objective {:.6e}, max gap {:.2e} ({}), round-trip {:.2e}",
                s.status,
                s.objective,
                s.max_gap,
                if s.exact { "exact" } else { "inexact" },
                s.roundtrip_v_error
            );
            let neg = !s.exact;
            (rep, neg, text)
        }
        Command::Powerflow { eta } => {
            let rep = experiments::run_powerflow_experiment(&ds, *eta)?;
            let p = rep.powerflow.as_ref().expect("powerflow section");
            let s = format!(
                "losses {:.6e}, residual {:.2e}, linear voltage gap {:.3e}",
                p.losses, p.residuals.overall, p.linear_voltage_gap
            );
            (rep, false, s)
        }
        Command::Verify { state, tol, args } => {
            let st: FlowState = match state {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
                None => {
                    let rep = experiments::run_exactness_experiment(&ds, args.variant(), args.eta)?;
                    rep.solve.expect("solve section").state
                }
            };
            let v = verify(&ds.network, &st, *tol)?;
            let s = format!("{} (max gap {:.2e})", if v.exact { "exact" } else { "not exact" }, v.max_gap);
            let neg = !v.exact;
            let mut rep = ExperimentReport::new(&ds);
            rep.exactness = Some(v);
            (rep, neg, s)
        }
        Command::Construct { eta, line, delta } => {
            let rep = experiments::run_construct_experiment(&ds, *eta, *line, *delta)?;
            let t = rep.construction.as_ref().expect("construction");
            let s = format!(
                "leaf {} m = {}: objective {:.6e} -> {:.6e}",
                ds.labels[t.leaf.0], t.m, t.objective_before, t.objective_after
            );
            let neg = t.objective_after >= t.objective_before;
            (rep, neg, s)
        }
        Command::Gap { samples, seed } => {
            let rep = experiments::run_gap_report(&ds, *samples, *seed)?;
            let g = rep.gap.as_ref().expect("gap");
            let s =
                format!("eps = {:.6} over {} feasible of {} samples", g.eps_estimate, g.feasible_samples, g.samples);
            (rep, false, s)
        }
        Command::Report { tol, samples, seed } => {
            let rep = experiments::run_full_report(&ds, *tol, *samples, *seed)?;
            let neg = rep.solve.as_ref().is_some_and(|s| !s.exact);
            (rep, neg, format!("report for {}", ds.name))
        }
    };
    Ok((rep, ds, negative, summary))
}

fn main() -> ExitCode {
    let top = Top::parse();
    match run(&top) {
        Ok((rep, ds, negative, summary)) => {
            eprintln!("{summary}");
            let written = match &top.common.out {
                Some(p) => write_json(&rep, p).map_err(|e| e.to_string()),
                None => serde_json::to_string_pretty(&rep).map(|t| println!("{t}")).map_err(|e| e.to_string()),
            };
            let csv = match (&top.common.csv, report_table(&rep, &ds)) {
                (Some(p), Some(t)) => write_csv(&t, p).map_err(|e| e.to_string()),
                _ => Ok(()),
            };
            if let Err(e) = written.and(csv) {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            if top.common.strict && negative {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

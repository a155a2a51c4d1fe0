//! Data ingestion, experiment drivers and report output for the `radopf`
//! command-line tool.

pub mod experiments;
pub mod netfile;
pub mod output;

pub use experiments::{
    run_exactness_experiment, run_gap_experiment, run_margin_experiment, ExperimentError, ExperimentReport, GapReport,
};
pub use netfile::{embedded_dataset, load_network_file, Dataset, NetfileError};

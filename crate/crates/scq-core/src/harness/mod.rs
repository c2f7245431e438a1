//! Experiment harness: configuration, ground-truth generation, sweeps, scoring and output.

pub mod config;
pub mod emit;
pub mod ingest;
pub mod instances;
pub mod run;
pub mod svg;

pub use config::{ExperimentConfig, Grid, GridPoint};
pub use run::{
    gram_error, make_truth, oracle_kind, recover, run_sweep, run_trial, summarize, trial_seed, CountRow, PointSummary, Recovered,
    TrialOptions, TrialOutput, TrialResult,
};

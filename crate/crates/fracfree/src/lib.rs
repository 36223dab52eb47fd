//! Experiment runner for the fracfree numerical laboratory.
//!
//! A run reads one JSON config, executes a named pipeline on top of
//! [`fracfree_core`] and writes `config.json`, `summary.json`, `timings.json`
//! and plot-ready CSVs into `<outdir>/<experiment>-<timestamp>/`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod cache;
pub mod config;
pub mod experiments;
pub mod instances;
pub mod report;

pub use config::{parse_config, validate_config, ConfigError, Experiment, ExperimentConfig};
pub use experiments::{run_experiment, run_in_dir, RunError};
pub use report::{ExperimentReport, Status, Verdict};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const INVALID_CONFIG: i32 = 2;
    pub const NON_CONVERGENCE: i32 = 3;
    /// A built-in verdict failed or the pipeline hit an internal error.
    pub const ASSERTION: i32 = 4;
}

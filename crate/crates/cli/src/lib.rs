//! Experiment harness around `rpca-core`: JSON-configured seeded runs of the
//! robust drivers against naive and oracle baselines, with CSV/JSON reports
//! and a wall-time scaling bench.

pub mod bench;
pub mod config;
pub mod error;
pub mod experiment;

pub use bench::{parse_grid, run_scaling_bench, BenchTable};
pub use config::{Baseline, ExperimentConfig, Mode};
pub use error::CliError;
pub use experiment::{run_experiment, ExperimentReport, Method, ReportRow, RunOptions};

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "RPCA_OUTPUT_DIR";

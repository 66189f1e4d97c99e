//! Config parsing, experiment orchestration and output files behind the CLI.

mod cli;
mod config;
mod data;
mod experiments;
pub mod suites;

pub use cli::{
    diagnostic, exit_code, run, run_resolved, sweep, verify, Overrides, RunResult, EXIT_CHECK_FAIL, EXIT_CONFIG,
    EXIT_DIVERGENCE, EXIT_PASS, FAILURE_MARKER,
};
pub use config::{AdapterKind, ExperimentConfig, ExperimentKind, InnerOptimizer, DEFAULT_OUTPUT_DIR, NUMERIC_FIELDS};
pub use data::{adapter_task, AdapterTask, ADAPTER_NOISE};
pub use experiments::{run_experiment, RunOutput};

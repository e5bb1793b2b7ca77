//! Config-driven experiment runner for `statecon`.

pub mod config;
pub mod dump;
pub mod experiment;
pub mod report;

pub use config::{ConfigError, ExperimentConfig};
pub use experiment::{
    build_problem, check_experiment, run_dir, run_experiment, run_experiment_from_path, CheckRow,
    Problem, RunError, RunReport, RunRow,
};
pub use report::emit_report;

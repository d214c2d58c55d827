//! Experiment runner, file formats and CLI support for `mpsdn-core`.

pub mod formats;
pub mod harness;

pub use harness::{
    compare, rule_budget_report, run_experiment, ExperimentConfig, ExperimentResult, ResultRow, Routing,
    TopologySpec,
};

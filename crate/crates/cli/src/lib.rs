//! Scenario files, commands and writers behind the `adasync` binary.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{ExitCode, SweepParam};
pub use config::{load_scenario, parse_scenario, scenario_to_toml, ConfigError, ScenarioFile};

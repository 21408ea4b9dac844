//! Scenario configs, the scenario runner, output formats and the `capwatch`
//! command line, on top of [`capwatch_core`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod report;
pub mod scenarios;
pub mod verify;

pub use config::{ConfigFile, Scenario};
pub use scenarios::{builtin, run, ScenarioResult};

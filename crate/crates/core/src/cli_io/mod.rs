//! Scenario files, command execution and on-disk output.

pub mod output;
pub mod runner;
pub mod scenario;

pub use runner::{run, Command, RunOptions, RunSummary};
pub use scenario::{load_scenario, parse_scenario, preset, preset_names, Scenario};

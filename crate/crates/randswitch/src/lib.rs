//! Scenario files, CSV output, the command-line front end and the bundled
//! three-mode example for `randswitch-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod output;
pub mod pipeline;
pub mod repro;
pub mod scenario;

pub use scenario::{load_scenario, parse_scenario, Scenario, ScenarioError};

//! Front-end plumbing for the `pwl` binary: loading experiments, building
//! reports and rendering them as JSON, CSV or plain tables.

pub mod input;
pub mod render;
pub mod report;

pub use input::{load_experiment, CliError};

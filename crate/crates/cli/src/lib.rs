//! Experiment harness: TOML specs, parallel runs and CSV/manifest output.

pub mod commands;
pub mod output;
pub mod spec;

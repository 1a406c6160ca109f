//! Experiment runner for the `pisim` binary: config loading, presets,
//! commands and CSV records.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod presets;
pub mod rates;
pub mod records;

pub use commands::Report;
pub use config::{load_config, resolve_str, Overrides, Resolved};

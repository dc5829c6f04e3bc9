//! Files, configuration and the `aput` command-line tool on top of
//! `aput-core`.
//!
//! - [`config`]: flat JSON experiment config with seed overrides.
//! - [`formats`]: model JSON, checkpoints, labeled CSV input, CSV reports.
//! - [`harness`]: problem construction, parallel sweeps, traces, oracles.
//! - [`svg`]: trade-off curve rendering.
//! - [`cli`]: argument parsing and subcommands.

pub mod cli;
pub mod config;
mod error;
pub mod formats;
pub mod harness;
pub mod svg;

pub use error::{CliError, CliResult};

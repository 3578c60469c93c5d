//! File formats, run directories and the command line around
//! [`vrnnaug_core`].
//!
//! A run directory holds the resolved `config.json`, the trained
//! `checkpoint.json`, a resumable `state.json`, the training `report.json`
//! with its `losses.csv` trace, and, when the data has a test segment, the
//! test forecast (`forecast.json`, `quantiles.csv`), the observations it
//! is scored against (`test.csv`) and the scores (`metrics.json`,
//! `ecp.csv`).

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;

pub use config::RunConfig;
pub use error::{CliError, Result};

//! Batch pipeline around the market: one cascade per day, per-day JSON
//! records, a ledger CSV and monthly summaries.

pub mod aggregate;
pub mod files;
pub mod run;

pub use aggregate::{aggregate, aggregate_dir, Aggregate};
pub use run::{run, DayRecord, DayStatus, Exit, RunConfig, RunSummary};

use std::path::PathBuf;

use microgrid_market::scenario::ScenarioError;
use microgrid_market::synth::SynthError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Config(String),
}

impl CliError {
    pub fn exit(&self) -> Exit {
        Exit::Input
    }
}

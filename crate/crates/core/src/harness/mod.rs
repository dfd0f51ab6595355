//! Monte Carlo estimation of decoding error probabilities and parameter sweeps.
//!
//! Trial `t` of an experiment draws everything it needs from stream `t` of the
//! master seed and trial outcomes are combined by integer addition, so results
//! do not depend on the number of worker threads.

mod experiment;
pub mod stats;
mod sweep;

use thiserror::Error;

pub use experiment::{
    pc_trial, rc_codebook, rc_trial, run_experiment, run_pc_experiment, run_rc_experiment, ExperimentResult,
    ExperimentSpec, Scheme, Tally,
};
pub use stats::wilson_interval;
pub use sweep::{run_sweep, summary_path, SweepOptions, SweepRow, SweepSummary, CSV_HEADER, SCHEMA_VERSION};

use crate::params::ParamError;
use crate::partition::PartitionError;
use crate::random_coding::RandomCodingError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    RandomCoding(#[from] RandomCodingError),
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Whether the failure comes from the filesystem rather than the inputs.
    pub fn is_io(&self) -> bool {
        matches!(self, HarnessError::Io(_) | HarnessError::Csv(_))
    }
}

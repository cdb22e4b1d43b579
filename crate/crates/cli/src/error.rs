//! Command errors and the stable exit-code contract:
//! 0 success, 1 a simulate check failed, 2 validation/format errors,
//! 3 no feasible threshold, 4 transport errors.

use thiserror::Error;

use cascade_core::backends::BackendError;
use cascade_core::calibration::CalibrationError;
use cascade_core::metrics::MetricsError;
use cascade_core::pipeline::PipelineError;
use cascade_core::repo::RepoError;

use crate::dataset::DatasetError;

pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NO_FEASIBLE_THRESHOLD: i32 = 3;
pub const EXIT_TRANSPORT: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("no feasible threshold: {0}")]
    NoFeasibleThreshold(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::NoFeasibleThreshold(_) => EXIT_NO_FEASIBLE_THRESHOLD,
            CliError::Transport(_) => EXIT_TRANSPORT,
            _ => EXIT_VALIDATION,
        }
    }

    pub fn from_backend(e: BackendError) -> Self {
        match e {
            BackendError::Transport(msg) => CliError::Transport(msg),
            other => CliError::Validation(other.to_string()),
        }
    }

    pub fn from_calibration(e: CalibrationError) -> Self {
        match e {
            CalibrationError::NoFeasibleThreshold { .. } => {
                CliError::NoFeasibleThreshold(e.to_string())
            }
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<RepoError> for CliError {
    fn from(e: RepoError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Validation(e.to_string())
    }
}

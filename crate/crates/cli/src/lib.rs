//! Experiment harness for the `qjumps` simulator: configuration, named
//! experiments, data emission and the invariant suite behind `verify`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod output;
pub mod verify;

use qjumps::analytics::AnalyticsError;
use qjumps::hamiltonians::HamiltonianError;
use qjumps::lindblad::LindbladError;
use qjumps::trajectory::TrajectoryError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("numerical abort: {0}")]
    Numerical(String),
    #[error("verification failed: {}", .0.join(", "))]
    VerifyFailed(Vec<String>),
}

impl CliError {
    /// Process exit status: 1 for bad input or I/O, 2 for a numerical
    /// abort, 3 for failed verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::VerifyFailed(_) => 3,
        }
    }
}

impl From<TrajectoryError> for CliError {
    fn from(e: TrajectoryError) -> Self {
        match e {
            TrajectoryError::StepTooLarge { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(vec![e.to_string()]),
        }
    }
}

impl From<LindbladError> for CliError {
    fn from(e: LindbladError) -> Self {
        match e {
            LindbladError::TraceDrift { .. } => CliError::Numerical(e.to_string()),
            LindbladError::InvalidInput(_) => CliError::Validation(vec![e.to_string()]),
        }
    }
}

impl From<AnalyticsError> for CliError {
    fn from(e: AnalyticsError) -> Self {
        CliError::Validation(vec![e.to_string()])
    }
}

impl From<HamiltonianError> for CliError {
    fn from(e: HamiltonianError) -> Self {
        CliError::Validation(vec![e.to_string()])
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(TrajectoryError::StepTooLarge { probability: 0.6 }).exit_code(), 2);
        assert_eq!(CliError::from(LindbladError::TraceDrift { time: 1.0, drift: 1e-3 }).exit_code(), 2);
        assert_eq!(CliError::from(TrajectoryError::InvalidInput("x".into())).exit_code(), 1);
        assert_eq!(CliError::VerifyFailed(vec!["pi_pulse".into()]).exit_code(), 3);
        assert_eq!(CliError::Io("disk".into()).exit_code(), 1);
    }
}

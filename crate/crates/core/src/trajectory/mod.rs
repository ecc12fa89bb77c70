//! Monte Carlo wavefunction engine.

mod channel;
mod engine;
mod protocols;
mod records;
pub mod rng;
mod state;

use thiserror::Error;

pub use channel::{four_level_channels, qubit_channels, JumpChannel, JumpTarget};
pub use engine::{effective_hamiltonian, Propagator, StepEvent, Stepper, MAX_STEP_PROBABILITY};
pub use protocols::*;
pub use records::*;
pub use state::{StateVector, BRIGHT_SUBSPACE, DARK_SUBSPACE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("jump probability {probability:.4} in one step is >= 0.5; reduce the time step")]
    StepTooLarge { probability: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid reset policy: {0}")]
    InvalidPolicy(String),
}

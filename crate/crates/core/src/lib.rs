//! Quantum-jump simulation of a Rabi-driven phase qubit coupled to a
//! two-level defect.
//!
//! Units: ħ = 1 and the tunneling rate of `|1e⟩` is 1, so every frequency
//! is a multiple of that rate and every time is in its inverse.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod hamiltonians;
pub mod lindblad;
pub mod model;
pub mod trajectory;

pub use hamiltonians::{Basis, BasisTransform, HamiltonianMatrix};
pub use model::{validate, DeviceParams, ModelParams, Violation};

use serde::Serialize;

use crate::hamiltonians::Basis;
use crate::model::ModelParams;

/// Where a quantum jump sends the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum JumpTarget {
    /// Collapse onto a basis state.
    State(&'static str),
    /// Leave the modelled subspace (macroscopic tunneling). Ends a run.
    Absorb,
}

/// A collapse channel `√rate · |target⟩⟨source|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpChannel {
    pub name: &'static str,
    pub source: &'static str,
    pub target: JumpTarget,
    pub rate: f64,
}

impl JumpChannel {
    pub fn is_absorbing(&self) -> bool {
        self.target == JumpTarget::Absorb
    }

    /// Check the channel against a basis: labels present and rate ≥ 0.
    pub fn check(&self, basis: Basis) -> Result<(), String> {
        if !(self.rate.is_finite() && self.rate >= 0.0) {
            return Err(format!("channel {}: rate must be finite and >= 0, got {}", self.name, self.rate));
        }
        if basis.index(self.source).is_none() {
            return Err(format!("channel {}: source {:?} not in basis", self.name, self.source));
        }
        if let JumpTarget::State(t) = self.target {
            if basis.index(t).is_none() {
                return Err(format!("channel {}: target {t:?} not in basis", self.name));
            }
        }
        Ok(())
    }
}

/// Tunneling out of `|1⟩` followed by relaxation `|1⟩ → |0⟩`.
pub fn qubit_channels(params: &ModelParams) -> Vec<JumpChannel> {
    vec![
        JumpChannel { name: "tunnel", source: "1", target: JumpTarget::Absorb, rate: params.tunneling },
        JumpChannel { name: "relax", source: "1", target: JumpTarget::State("0"), rate: params.relaxation },
    ]
}

/// Tunneling out of `|1e⟩`, then qubit relaxation in each defect state.
/// Tunneling from every other level is neglected, and the defect itself
/// does not relax.
pub fn four_level_channels(params: &ModelParams) -> Vec<JumpChannel> {
    vec![
        JumpChannel { name: "tunnel", source: "1e", target: JumpTarget::Absorb, rate: params.tunneling },
        JumpChannel { name: "relax_e", source: "1e", target: JumpTarget::State("0e"), rate: params.relaxation },
        JumpChannel { name: "relax_g", source: "1g", target: JumpTarget::State("0g"), rate: params.relaxation },
    ]
}

/// Absorbing channels first, relaxation after; stable otherwise.
pub(crate) fn ordered(channels: &[JumpChannel]) -> Vec<JumpChannel> {
    let mut out: Vec<JumpChannel> = channels.to_vec();
    out.sort_by_key(|c| !c.is_absorbing());
    out
}

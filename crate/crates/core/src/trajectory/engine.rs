//! Single-step quantum-jump update.
//!
//! Each step computes the jump probability of every channel, compares each
//! against its own uniform deviate (absorbing channels first), and either
//! applies the jump or evolves the conditional state under the
//! non-Hermitian effective Hamiltonian and renormalizes.

use nalgebra::{DMatrix, SMatrix, SVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::channel::{ordered, JumpChannel, JumpTarget};
use super::state::StateVector;
use super::TrajectoryError;
use crate::hamiltonians::{Basis, HamiltonianMatrix};

/// Largest total jump probability accepted in a single step.
pub const MAX_STEP_PROBABILITY: f64 = 0.5;
const MAX_CHANNELS: usize = 8;

/// How the no-jump evolution over one step is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Propagator {
    /// `1 − i H_eff δt`, with per-channel probabilities
    /// `rate · δt · |⟨source|ψ⟩|²` from the state at the start of the step.
    #[default]
    FirstOrder,
    /// `exp(−i H_eff δt)` precomputed once. The total jump probability is
    /// the exact norm loss over the step, shared among channels in
    /// proportion to their rate-weighted source populations. A single
    /// uniform deviate selects either no jump or one channel.
    Exponential,
}

/// What happened during one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepEvent {
    /// No jump; `norm_before` is ‖ψ‖² after the non-unitary update and
    /// before renormalization.
    Evolved { norm_before: f64 },
    /// A channel collapsed the state onto its target.
    Jumped { channel: usize },
    /// An absorbing channel fired; the state is left as it was.
    Absorbed { channel: usize },
}

/// The effective Hamiltonian `H − (i/2) Σ_k rate_k |src_k⟩⟨src_k|`.
pub fn effective_hamiltonian(h: &HamiltonianMatrix, channels: &[JumpChannel]) -> HamiltonianMatrix {
    let basis = h.basis();
    let mut m = h.entries().clone();
    for c in channels {
        let k = basis.idx(c.source);
        m[(k, k)] -= Complex64::new(0.0, c.rate / 2.0);
    }
    HamiltonianMatrix::new(basis, m, channels.iter().all(|c| c.rate == 0.0) && h.is_hermitian())
}

#[derive(Debug, Clone, Copy)]
struct Compiled {
    source: usize,
    target: Option<usize>,
    rate: f64,
}

/// Compiled stepper for a fixed dimension.
#[derive(Debug, Clone)]
pub(crate) struct Kernel<const N: usize> {
    update: SMatrix<Complex64, N, N>,
    channels: Vec<Compiled>,
    dt: f64,
    propagator: Propagator,
}

pub(crate) type Vector<const N: usize> = SVector<Complex64, N>;

impl<const N: usize> Kernel<N> {
    fn new(h_eff: &DMatrix<Complex64>, channels: Vec<Compiled>, dt: f64, propagator: Propagator) -> Self {
        let a = h_eff * Complex64::new(0.0, -dt);
        let m = match propagator {
            Propagator::FirstOrder => DMatrix::identity(N, N) + a,
            Propagator::Exponential => a.exp(),
        };
        Self { update: SMatrix::from_fn(|r, c| m[(r, c)]), channels, dt, propagator }
    }

    pub(crate) fn dt(&self) -> f64 {
        self.dt
    }

    /// Channel selected by `u ∈ [0, 1)` with weights
    /// `rate · (|ψ_src|² + |(Uψ)_src|²)`.
    fn pick_channel(&self, psi: &Vector<N>, next: &Vector<N>, u: f64) -> usize {
        let mut weights = [0.0f64; MAX_CHANNELS];
        let mut sum = 0.0;
        for (w, c) in weights.iter_mut().zip(&self.channels) {
            *w = c.rate * (psi[c.source].norm_sqr() + next[c.source].norm_sqr());
            sum += *w;
        }
        let target = u * sum;
        let mut acc = 0.0;
        for (k, w) in weights.iter().take(self.channels.len()).enumerate() {
            acc += w;
            if target < acc {
                return k;
            }
        }
        self.channels.len() - 1
    }

    #[inline]
    pub(crate) fn step<R: Rng + ?Sized>(&self, psi: &mut Vector<N>, rng: &mut R) -> Result<StepEvent, TrajectoryError> {
        let mut next = Vector::<N>::zeros();
        let mut norm_next = 0.0;
        for r in 0..N {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..N {
                acc += self.update[(r, c)] * psi[c];
            }
            next[r] = acc;
            norm_next += acc.norm_sqr();
        }
        let fired = match self.propagator {
            Propagator::FirstOrder => {
                let mut probs = [0.0f64; MAX_CHANNELS];
                let mut total = 0.0;
                for (p, c) in probs.iter_mut().zip(&self.channels) {
                    *p = c.rate * self.dt * psi[c.source].norm_sqr();
                    total += *p;
                }
                if total >= MAX_STEP_PROBABILITY {
                    return Err(TrajectoryError::StepTooLarge { probability: total });
                }
                let mut fired = None;
                for (k, p) in probs.iter().take(self.channels.len()).enumerate() {
                    let r: f64 = rng.random();
                    if fired.is_none() && r < *p {
                        fired = Some(k);
                    }
                }
                fired
            }
            Propagator::Exponential => {
                let total = (1.0 - norm_next).max(0.0);
                if total >= MAX_STEP_PROBABILITY {
                    return Err(TrajectoryError::StepTooLarge { probability: total });
                }
                let r: f64 = rng.random();
                if r < total {
                    Some(self.pick_channel(psi, &next, r / total))
                } else {
                    None
                }
            }
        };
        match fired {
            None => {
                *psi = next.unscale(norm_next.sqrt());
                Ok(StepEvent::Evolved { norm_before: norm_next })
            }
            Some(k) => match self.channels[k].target {
                None => Ok(StepEvent::Absorbed { channel: k }),
                Some(t) => {
                    *psi = Vector::<N>::zeros();
                    psi[t] = Complex64::new(1.0, 0.0);
                    Ok(StepEvent::Jumped { channel: k })
                }
            },
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum AnyKernel {
    Two(Kernel<2>),
    Four(Kernel<4>),
}

/// A compiled single-step propagator for a Hamiltonian and set of jump
/// channels.
#[derive(Debug, Clone)]
pub struct Stepper {
    basis: Basis,
    channels: Vec<JumpChannel>,
    h_eff: HamiltonianMatrix,
    pub(crate) kernel: AnyKernel,
}

impl Stepper {
    /// Build a stepper from the Hermitian system Hamiltonian `h`; decay
    /// terms of the effective Hamiltonian are generated from `channels`.
    pub fn new(
        h: &HamiltonianMatrix,
        channels: &[JumpChannel],
        dt: f64,
        propagator: Propagator,
    ) -> Result<Self, TrajectoryError> {
        let basis = h.basis();
        if !(dt.is_finite() && dt > 0.0) {
            return Err(TrajectoryError::InvalidInput(format!("time step must be > 0, got {dt}")));
        }
        if channels.len() > MAX_CHANNELS {
            return Err(TrajectoryError::InvalidInput(format!("at most {MAX_CHANNELS} channels supported")));
        }
        for c in channels {
            c.check(basis).map_err(TrajectoryError::InvalidInput)?;
        }
        let channels = ordered(channels);
        let h_eff = effective_hamiltonian(h, &channels);
        let compiled: Vec<Compiled> = channels
            .iter()
            .map(|c| Compiled {
                source: basis.idx(c.source),
                target: match c.target {
                    JumpTarget::Absorb => None,
                    JumpTarget::State(t) => Some(basis.idx(t)),
                },
                rate: c.rate,
            })
            .collect();
        let kernel = match basis.dim() {
            2 => AnyKernel::Two(Kernel::new(h_eff.entries(), compiled, dt, propagator)),
            4 => AnyKernel::Four(Kernel::new(h_eff.entries(), compiled, dt, propagator)),
            n => return Err(TrajectoryError::InvalidInput(format!("unsupported dimension {n}"))),
        };
        Ok(Self { basis, channels, h_eff, kernel })
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    /// Channels in the order they are tested each step.
    pub fn channels(&self) -> &[JumpChannel] {
        &self.channels
    }

    pub fn effective(&self) -> &HamiltonianMatrix {
        &self.h_eff
    }

    pub fn dt(&self) -> f64 {
        match &self.kernel {
            AnyKernel::Two(k) => k.dt(),
            AnyKernel::Four(k) => k.dt(),
        }
    }

    /// Advance `state` by one step.
    pub fn step<R: Rng + ?Sized>(&self, state: &mut StateVector, rng: &mut R) -> Result<StepEvent, TrajectoryError> {
        if state.basis() != self.basis {
            return Err(TrajectoryError::InvalidInput(format!(
                "state basis {:?} does not match stepper basis {:?}",
                state.basis(),
                self.basis
            )));
        }
        fn go<const N: usize, R: Rng + ?Sized>(
            k: &Kernel<N>,
            state: &mut StateVector,
            rng: &mut R,
        ) -> Result<StepEvent, TrajectoryError> {
            let mut v = to_svector::<N>(state);
            let ev = k.step(&mut v, rng)?;
            *state = from_svector(state.basis(), &v);
            Ok(ev)
        }
        match &self.kernel {
            AnyKernel::Two(k) => go(k, state, rng),
            AnyKernel::Four(k) => go(k, state, rng),
        }
    }

    pub fn channel_name(&self, index: usize) -> &'static str {
        self.channels[index].name
    }
}

pub(crate) fn to_svector<const N: usize>(state: &StateVector) -> Vector<N> {
    Vector::<N>::from_fn(|r, _| state.amplitudes()[r])
}

pub(crate) fn from_svector<const N: usize>(basis: Basis, v: &Vector<N>) -> StateVector {
    StateVector::from_amplitudes(basis, v.iter().copied().collect())
}

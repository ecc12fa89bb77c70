use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::hamiltonians::Basis;

/// A (possibly unnormalized) pure state over a labelled basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    basis: Basis,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn from_amplitudes(basis: Basis, amplitudes: Vec<Complex64>) -> Self {
        assert_eq!(amplitudes.len(), basis.dim(), "amplitude count must match basis {basis:?}");
        Self { basis, amplitudes }
    }

    /// The normalized basis state `|label⟩`.
    pub fn basis_state(basis: Basis, label: &str) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); basis.dim()];
        amplitudes[basis.idx(label)] = Complex64::new(1.0, 0.0);
        Self { basis, amplitudes }
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, label: &str) -> Complex64 {
        self.amplitudes[self.basis.idx(label)]
    }

    /// |⟨label|ψ⟩|², not divided by the norm.
    pub fn population(&self, label: &str) -> f64 {
        self.amplitude(label).norm_sqr()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Summed population of a set of labels.
    pub fn subspace_population(&self, labels: &[&str]) -> f64 {
        labels.iter().map(|l| self.population(l)).sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_squared() - 1.0).abs() <= tol
    }

    pub fn normalize(&mut self) {
        let n = self.norm_squared().sqrt();
        assert!(n > 0.0, "cannot normalize the zero vector");
        for a in &mut self.amplitudes {
            *a /= n;
        }
    }

    /// The matching basis label of a normalized basis state, if this is one.
    pub fn as_basis_label(&self) -> Option<&'static str> {
        let mut hit = None;
        for (k, a) in self.amplitudes.iter().enumerate() {
            if *a == Complex64::new(1.0, 0.0) {
                if hit.is_some() {
                    return None;
                }
                hit = Some(k);
            } else if *a != Complex64::new(0.0, 0.0) {
                return None;
            }
        }
        hit.map(|k| self.basis.labels()[k])
    }
}

/// Dark subspace A = {0g, 1g}.
pub const DARK_SUBSPACE: [&str; 2] = ["0g", "1g"];
/// Bright subspace B = {0e, 1e}.
pub const BRIGHT_SUBSPACE: [&str; 2] = ["0e", "1e"];

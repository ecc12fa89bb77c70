//! Hamiltonian builders for the driven qubit and the qubit-defect system.
//!
//! Bases are addressed by label. The bare four-level basis is ordered
//! `["0g", "1g", "0e", "1e"]` (qubit level, defect level); the dressed basis
//! is `["Ae", "Ag", "Be", "Bg"]` where A = {0g, 1g} is the dark subspace
//! and B = {0e, 1e} the bright one.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelParams;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HamiltonianError {
    #[error("dressing angle undefined for detuning = 0 and Rabi frequency = 0")]
    UndefinedDressingAngle,
    #[error("basis mismatch: expected {expected:?}, got {got:?}")]
    BasisMismatch { expected: Basis, got: Basis },
    #[error("dimension mismatch: matrix is {matrix}x{matrix}, transform is {transform}x{transform}")]
    DimensionMismatch { matrix: usize, transform: usize },
}

/// An ordered, labelled basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    /// Bare qubit `["0", "1"]`.
    Qubit,
    /// Qubit ⊗ defect `["0g", "1g", "0e", "1e"]`.
    Bare,
    /// Drive-dressed states `["Ae", "Ag", "Be", "Bg"]`.
    Dressed,
}

impl Basis {
    pub const QUBIT_LABELS: [&'static str; 2] = ["0", "1"];
    pub const BARE_LABELS: [&'static str; 4] = ["0g", "1g", "0e", "1e"];
    pub const DRESSED_LABELS: [&'static str; 4] = ["Ae", "Ag", "Be", "Bg"];

    pub fn labels(self) -> &'static [&'static str] {
        match self {
            Basis::Qubit => &Self::QUBIT_LABELS,
            Basis::Bare => &Self::BARE_LABELS,
            Basis::Dressed => &Self::DRESSED_LABELS,
        }
    }

    pub fn dim(self) -> usize {
        self.labels().len()
    }

    pub fn index(self, label: &str) -> Option<usize> {
        self.labels().iter().position(|&l| l == label)
    }

    /// Index of `label`, panicking on labels outside the basis.
    pub fn idx(self, label: &str) -> usize {
        self.index(label)
            .unwrap_or_else(|| panic!("label {label:?} is not in basis {:?}", self.labels()))
    }
}

/// A dense complex Hamiltonian over a labelled basis.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianMatrix {
    basis: Basis,
    entries: DMatrix<Complex64>,
    hermitian: bool,
}

impl HamiltonianMatrix {
    pub fn new(basis: Basis, entries: DMatrix<Complex64>, hermitian: bool) -> Self {
        assert_eq!(entries.nrows(), basis.dim());
        assert_eq!(entries.ncols(), basis.dim());
        Self { basis, entries, hermitian }
    }

    fn zeros(basis: Basis, hermitian: bool) -> Self {
        let n = basis.dim();
        Self::new(basis, DMatrix::zeros(n, n), hermitian)
    }

    fn set(&mut self, row: &str, col: &str, value: Complex64) {
        let (r, c) = (self.basis.idx(row), self.basis.idx(col));
        self.entries[(r, c)] = value;
    }

    /// Set a real symmetric coupling between two labels.
    fn couple(&mut self, a: &str, b: &str, value: f64) {
        self.set(a, b, value.into());
        self.set(b, a, value.into());
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn labels(&self) -> &'static [&'static str] {
        self.basis.labels()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<Complex64> {
        self.entries
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn entry(&self, row: &str, col: &str) -> Complex64 {
        self.entries[(self.basis.idx(row), self.basis.idx(col))]
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.entries)
    }

    /// max |H − H†|.
    pub fn hermiticity_residual(&self) -> f64 {
        max_abs(&(&self.entries - self.entries.adjoint()))
    }

    /// Check the declared structure: Hermitian matrices equal their adjoint
    /// (relative 1e-12), non-Hermitian ones only carry decay on the diagonal.
    pub fn satisfies_invariants(&self) -> bool {
        if self.hermitian {
            self.hermiticity_residual() <= 1e-12 * self.max_abs().max(1.0)
        } else {
            (0..self.dim()).all(|k| self.entries[(k, k)].im <= 0.0)
        }
    }

    /// The Hermitian part (H + H†)/2.
    pub fn hermitian_part(&self) -> HamiltonianMatrix {
        let h = (&self.entries + self.entries.adjoint()).scale(0.5);
        HamiltonianMatrix::new(self.basis, h, true)
    }

    /// JSON representation with complex entries as `[re, im]` pairs.
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<Vec<[f64; 2]>> = (0..self.dim())
            .map(|r| (0..self.dim()).map(|c| {
                let z = self.entries[(r, c)];
                [z.re, z.im]
            }).collect())
            .collect();
        serde_json::json!({
            "dimension": self.dim(),
            "basis_labels": self.labels(),
            "is_hermitian": self.hermitian,
            "entries": rows,
        })
    }
}

pub(crate) fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Rotating-frame Hamiltonian of the bare qubit, `[[0, Ω_m/2], [Ω_m/2, Δ]]`.
pub fn qubit_rotating(detuning: f64, rabi: f64) -> HamiltonianMatrix {
    let mut h = HamiltonianMatrix::zeros(Basis::Qubit, true);
    h.couple("0", "1", rabi / 2.0);
    h.set("1", "1", detuning.into());
    h
}

/// Non-Hermitian effective Hamiltonian of the bare qubit: the excited level
/// decays at γ₁₀ + Γ₁.
pub fn qubit_effective(detuning: f64, rabi: f64, relaxation: f64, tunneling: f64) -> HamiltonianMatrix {
    let mut h = qubit_rotating(detuning, rabi);
    h.hermitian = false;
    h.set("1", "1", Complex64::new(detuning, -(relaxation + tunneling) / 2.0));
    h
}

/// Absolute frequencies needed for the laboratory-frame Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LabFrame {
    pub qubit_frequency: f64,
    pub tls_frequency: f64,
    pub drive_frequency: f64,
    pub rabi_frequency: f64,
    pub coupling: f64,
}

impl LabFrame {
    /// Reconstruct absolute frequencies from the detunings of `params` for a
    /// chosen drive frequency ω: ω₁₀ = ω + Δ, ω_TLS = ω₁₀ + Δ_r.
    pub fn from_params(params: &ModelParams, drive_frequency: f64) -> Self {
        let qubit_frequency = drive_frequency + params.detuning;
        Self {
            qubit_frequency,
            tls_frequency: qubit_frequency + params.tls_detuning,
            drive_frequency,
            rabi_frequency: params.rabi_frequency,
            coupling: params.coupling,
        }
    }

    pub fn detuning(&self) -> f64 {
        self.qubit_frequency - self.drive_frequency
    }

    pub fn tls_detuning(&self) -> f64 {
        self.tls_frequency - self.qubit_frequency
    }
}

/// Laboratory-frame four-level Hamiltonian at time `t`, with the drive
/// entering as Ω_m cos(ωt).
pub fn four_level_lab(lab: &LabFrame, t: f64) -> HamiltonianMatrix {
    let drive = lab.rabi_frequency * (lab.drive_frequency * t).cos();
    let mut h = HamiltonianMatrix::zeros(Basis::Bare, true);
    h.set("1g", "1g", lab.qubit_frequency.into());
    h.set("0e", "0e", lab.tls_frequency.into());
    h.set("1e", "1e", (lab.qubit_frequency + lab.tls_frequency).into());
    h.couple("0g", "1g", drive);
    h.couple("0e", "1e", drive);
    h.couple("1g", "0e", lab.coupling);
    h
}

/// Interaction-picture Hamiltonian after the rotating-wave approximation.
/// Only off-diagonal entries survive, each carrying the phase of its
/// detuning.
pub fn four_level_rwa_lab(detuning: f64, tls_detuning: f64, rabi: f64, coupling: f64, t: f64) -> HamiltonianMatrix {
    let drive = Complex64::from_polar(rabi / 2.0, -detuning * t);
    let swap = Complex64::from_polar(coupling, -tls_detuning * t);
    let mut h = HamiltonianMatrix::zeros(Basis::Bare, true);
    h.set("0g", "1g", drive);
    h.set("1g", "0g", drive.conj());
    h.set("0e", "1e", drive);
    h.set("1e", "0e", drive.conj());
    h.set("1g", "0e", swap);
    h.set("0e", "1g", swap.conj());
    h
}

/// Time-independent rotating-frame Hamiltonian of the qubit-defect system.
pub fn four_level_rotating(detuning: f64, tls_detuning: f64, rabi: f64, coupling: f64) -> HamiltonianMatrix {
    let mut h = HamiltonianMatrix::zeros(Basis::Bare, true);
    h.set("1g", "1g", detuning.into());
    h.set("0e", "0e", (detuning + tls_detuning).into());
    h.set("1e", "1e", (2.0 * detuning + tls_detuning).into());
    h.couple("0g", "1g", rabi / 2.0);
    h.couple("0e", "1e", rabi / 2.0);
    h.couple("1g", "0e", coupling);
    h
}

pub fn four_level_rotating_from(params: &ModelParams) -> HamiltonianMatrix {
    four_level_rotating(params.detuning, params.tls_detuning, params.rabi_frequency, params.coupling)
}

/// Non-Hermitian effective four-level Hamiltonian: `|1e⟩` decays at
/// γ₁₀ + Γ₁ₑ and `|1g⟩` at γ₁₀. Defect relaxation is not included.
pub fn four_level_effective(params: &ModelParams) -> HamiltonianMatrix {
    let mut h = four_level_rotating_from(params);
    h.hermitian = false;
    let d = params.detuning;
    let dr = params.tls_detuning;
    h.set("1e", "1e", Complex64::new(2.0 * d + dr, -params.excited_decay() / 2.0));
    h.set("1g", "1g", Complex64::new(d, -params.relaxation / 2.0));
    h
}

/// Which change of basis a [`BasisTransform`] represents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TransformKind {
    /// Diagonal phase transform to the rotating frame at time `t`.
    RotatingFrame { t: f64 },
    /// Block rotation into the dressed basis with angle `alpha`.
    Dressed { alpha: f64 },
}

/// A unitary change of basis; columns are the new basis vectors expressed
/// in the old basis.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisTransform {
    kind: TransformKind,
    entries: DMatrix<Complex64>,
}

impl BasisTransform {
    /// Wrap an arbitrary matrix. Used to build deliberately broken fixtures.
    pub fn from_parts(kind: TransformKind, entries: DMatrix<Complex64>) -> Self {
        Self { kind, entries }
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// max |U†U − 1|.
    pub fn unitarity_residual(&self) -> f64 {
        let n = self.dim();
        max_abs(&(self.entries.adjoint() * &self.entries - DMatrix::identity(n, n)))
    }
}

fn frame_phases(detuning: f64, tls_detuning: f64) -> [f64; 4] {
    [0.0, detuning, detuning + tls_detuning, 2.0 * detuning + tls_detuning]
}

/// The diagonal phase transform U(t) = diag(1, e^{iΔt}, e^{i(Δ+Δ_r)t}, e^{i(2Δ+Δ_r)t}).
pub fn rotating_frame_transform(detuning: f64, tls_detuning: f64, t: f64) -> BasisTransform {
    let phases = frame_phases(detuning, tls_detuning);
    let diag = nalgebra::DVector::from_iterator(4, phases.iter().map(|w| Complex64::from_polar(1.0, w * t)));
    BasisTransform { kind: TransformKind::RotatingFrame { t }, entries: DMatrix::from_diagonal(&diag) }
}

/// Exact time derivative dU/dt of [`rotating_frame_transform`].
pub fn rotating_frame_derivative(detuning: f64, tls_detuning: f64, t: f64) -> DMatrix<Complex64> {
    let phases = frame_phases(detuning, tls_detuning);
    let diag = nalgebra::DVector::from_iterator(4, phases.iter().map(|w| I * *w * Complex64::from_polar(1.0, w * t)));
    DMatrix::from_diagonal(&diag)
}

/// H' = U† H U − i U† dU/dt for a given transform and its derivative.
pub fn transform_to_rotating_frame(
    h: &HamiltonianMatrix,
    u: &BasisTransform,
    du_dt: &DMatrix<Complex64>,
) -> HamiltonianMatrix {
    let ud = u.entries.adjoint();
    let out = &ud * &h.entries * &u.entries - (&ud * du_dt) * I;
    HamiltonianMatrix::new(h.basis, out, h.hermitian)
}

/// Dressing angle α = atan2(Ω_m, Δ); α = π/2 on resonance.
pub fn dressing_angle(detuning: f64, rabi: f64) -> Result<f64, HamiltonianError> {
    if detuning == 0.0 && rabi == 0.0 {
        return Err(HamiltonianError::UndefinedDressingAngle);
    }
    Ok(rabi.atan2(detuning))
}

/// Block-diagonal rotation whose columns are |Ae⟩, |Ag⟩, |Be⟩, |Bg⟩.
pub fn dressed_transform(detuning: f64, rabi: f64) -> Result<BasisTransform, HamiltonianError> {
    let alpha = dressing_angle(detuning, rabi)?;
    let (s, c) = (alpha / 2.0).sin_cos();
    #[rustfmt::skip]
    let v = DMatrix::from_row_slice(4, 4, &[
        s,   c,   0.0, 0.0,
        c,   -s,  0.0, 0.0,
        0.0, 0.0, s,   c,
        0.0, 0.0, c,   -s,
    ]);
    Ok(BasisTransform { kind: TransformKind::Dressed { alpha }, entries: v.map(Complex64::from) })
}

/// Rewrite a bare-basis Hamiltonian in the dressed basis, V† H V.
pub fn to_dressed(h: &HamiltonianMatrix, v: &BasisTransform) -> Result<HamiltonianMatrix, HamiltonianError> {
    if h.basis != Basis::Bare {
        return Err(HamiltonianError::BasisMismatch { expected: Basis::Bare, got: h.basis });
    }
    if v.dim() != h.dim() {
        return Err(HamiltonianError::DimensionMismatch { matrix: h.dim(), transform: v.dim() });
    }
    let out = v.entries.adjoint() * &h.entries * &v.entries;
    Ok(HamiltonianMatrix::new(Basis::Dressed, out, h.hermitian))
}

/// Closed-form dressed-basis Hamiltonian. On resonance every A-B coupling
/// is ±Ω_c/2; off resonance the couplings are λ_ij Ω_c with the half-angle
/// coefficients of α.
pub fn dressed_closed_form(
    detuning: f64,
    tls_detuning: f64,
    rabi: f64,
    coupling: f64,
) -> Result<HamiltonianMatrix, HamiltonianError> {
    let mut h = HamiltonianMatrix::zeros(Basis::Dressed, true);
    if detuning == 0.0 {
        if rabi == 0.0 {
            return Err(HamiltonianError::UndefinedDressingAngle);
        }
        let half = coupling / 2.0;
        h.set("Ae", "Ae", (rabi / 2.0).into());
        h.set("Ag", "Ag", (-rabi / 2.0).into());
        h.set("Be", "Be", (tls_detuning + rabi / 2.0).into());
        h.set("Bg", "Bg", (tls_detuning - rabi / 2.0).into());
        h.couple("Ae", "Be", half);
        h.couple("Ae", "Bg", half);
        h.couple("Ag", "Be", -half);
        h.couple("Ag", "Bg", -half);
        return Ok(h);
    }
    let alpha = dressing_angle(detuning, rabi)?;
    let (s, c) = (alpha / 2.0).sin_cos();
    let root = rabi.hypot(detuning);
    let w_ae = (detuning + root) / 2.0;
    let w_ag = (detuning - root) / 2.0;
    let shift = detuning + tls_detuning;
    h.set("Ae", "Ae", w_ae.into());
    h.set("Ag", "Ag", w_ag.into());
    h.set("Be", "Be", (w_ae + shift).into());
    h.set("Bg", "Bg", (w_ag + shift).into());
    h.couple("Ae", "Be", s * c * coupling);
    h.couple("Ae", "Bg", c * c * coupling);
    h.couple("Ag", "Be", -s * s * coupling);
    h.couple("Ag", "Bg", -s * c * coupling);
    Ok(h)
}

/// max |U†H_I U − iU†dU/dt − H'| at time `t`, using the exact derivative.
pub fn frame_identity_residual(detuning: f64, tls_detuning: f64, rabi: f64, coupling: f64, t: f64) -> f64 {
    let h_i = four_level_rwa_lab(detuning, tls_detuning, rabi, coupling, t);
    let u = rotating_frame_transform(detuning, tls_detuning, t);
    let du = rotating_frame_derivative(detuning, tls_detuning, t);
    let lhs = transform_to_rotating_frame(&h_i, &u, &du);
    let rhs = four_level_rotating(detuning, tls_detuning, rabi, coupling);
    max_abs(&(lhs.entries - rhs.entries))
}

/// Same as [`frame_identity_residual`] with dU/dt from a central finite
/// difference of step `h`.
pub fn frame_identity_residual_fd(
    detuning: f64,
    tls_detuning: f64,
    rabi: f64,
    coupling: f64,
    t: f64,
    h: f64,
) -> f64 {
    let h_i = four_level_rwa_lab(detuning, tls_detuning, rabi, coupling, t);
    let u = rotating_frame_transform(detuning, tls_detuning, t);
    let plus = rotating_frame_transform(detuning, tls_detuning, t + h);
    let minus = rotating_frame_transform(detuning, tls_detuning, t - h);
    let du = (plus.entries - minus.entries) / Complex64::from(2.0 * h);
    let lhs = transform_to_rotating_frame(&h_i, &u, &du);
    let rhs = four_level_rotating(detuning, tls_detuning, rabi, coupling);
    max_abs(&(lhs.entries - rhs.entries))
}

/// max |V†H'V − closed form| for a given dressed-transform builder.
pub fn dressed_identity_residual_with<F>(
    build: F,
    detuning: f64,
    tls_detuning: f64,
    rabi: f64,
    coupling: f64,
) -> Result<f64, HamiltonianError>
where
    F: Fn(f64, f64) -> Result<BasisTransform, HamiltonianError>,
{
    let v = build(detuning, rabi)?;
    let h = four_level_rotating(detuning, tls_detuning, rabi, coupling);
    let lhs = to_dressed(&h, &v)?;
    let rhs = dressed_closed_form(detuning, tls_detuning, rabi, coupling)?;
    Ok(max_abs(&(lhs.entries - rhs.entries)))
}

pub fn dressed_identity_residual(detuning: f64, tls_detuning: f64, rabi: f64, coupling: f64) -> Result<f64, HamiltonianError> {
    dressed_identity_residual_with(dressed_transform, detuning, tls_detuning, rabi, coupling)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn telegraph_set() -> ModelParams {
        ModelParams { tls_detuning: 0.0, ..ModelParams::default() }
    }

    /// Eigenvalues of a 2x2 via the characteristic polynomial.
    fn eig2(m: &DMatrix<Complex64>) -> (Complex64, Complex64) {
        let tr = m[(0, 0)] + m[(1, 1)];
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let disc = (tr * tr - det * 4.0).sqrt();
        ((tr + disc) / 2.0, (tr - disc) / 2.0)
    }

    /// Power-sum traces tr(H^k), k = 1..n: equal for similar matrices.
    fn power_traces(m: &DMatrix<Complex64>) -> Vec<Complex64> {
        let mut p = m.clone();
        let mut out = vec![p.trace()];
        for _ in 1..m.nrows() {
            p = &p * m;
            out.push(p.trace());
        }
        out
    }

    #[test]
    fn basis_labels_round_trip() {
        for basis in [Basis::Qubit, Basis::Bare, Basis::Dressed] {
            for (k, l) in basis.labels().iter().enumerate() {
                assert_eq!(basis.index(l), Some(k));
            }
        }
        assert_eq!(Basis::Bare.index("Ae"), None);
    }

    #[test]
    fn qubit_rotating_examples() {
        let h = qubit_rotating(0.0, 0.0);
        assert_eq!(h.max_abs(), 0.0);
        let h = qubit_rotating(0.0, 10.0);
        assert_eq!(h.entry("0", "1"), c(5.0, 0.0));
        assert_eq!(h.entry("1", "0"), c(5.0, 0.0));
        assert_eq!(h.entry("0", "0"), c(0.0, 0.0));
        assert_eq!(h.entry("1", "1"), c(0.0, 0.0));
    }

    #[test]
    fn qubit_rotating_eigenvalues() {
        let (a, b) = eig2(qubit_rotating(1.0, 5.0).entries());
        let r = 26f64.sqrt();
        let (hi, lo) = if a.re > b.re { (a, b) } else { (b, a) };
        assert_relative_eq!(hi.re, (1.0 + r) / 2.0, epsilon = 1e-12);
        assert_relative_eq!(lo.re, (1.0 - r) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn qubit_effective_examples() {
        assert_eq!(qubit_effective(0.3, 2.0, 0.0, 0.0).entries(), qubit_rotating(0.3, 2.0).entries());
        let h = qubit_effective(0.0, 10.0, 0.25, 1.0);
        assert_eq!(h.entry("1", "1"), c(0.0, -0.625));
        assert!(!h.is_hermitian());
        assert!(h.satisfies_invariants());
    }

    #[test]
    fn lab_frame_examples() {
        let p = telegraph_set();
        let lab = LabFrame::from_params(&p, 100.0);
        let t = FRAC_PI_2 / lab.drive_frequency;
        let h = four_level_lab(&lab, t);
        assert!(h.entry("0g", "1g").norm() < 1e-12);
        assert!(h.entry("0e", "1e").norm() < 1e-12);
        assert_eq!(h.entry("1g", "0e"), c(p.coupling, 0.0));

        let decoupled = four_level_lab(&LabFrame { coupling: 0.0, ..lab }, 0.37);
        for a in ["0g", "1g"] {
            for b in ["0e", "1e"] {
                assert_eq!(decoupled.entry(a, b), c(0.0, 0.0));
            }
        }
        assert_relative_eq!(lab.detuning(), p.detuning);
        assert_relative_eq!(lab.tls_detuning(), p.tls_detuning);
    }

    /// Interaction picture of the lab Hamiltonian, minus the counter-rotating
    /// terms, reproduces the RWA matrix.
    #[test]
    fn rwa_matches_interaction_picture_of_lab_frame() {
        let p = ModelParams { detuning: 0.7, tls_detuning: -1.3, ..ModelParams::default() };
        let lab = LabFrame::from_params(&p, 40.0);
        for &t in &[0.0, 0.11, 0.5, 2.3] {
            let h = four_level_lab(&lab, t);
            let energies = [0.0, lab.qubit_frequency, lab.tls_frequency, lab.qubit_frequency + lab.tls_frequency];
            let mut hi = DMatrix::<Complex64>::zeros(4, 4);
            for r in 0..4 {
                for s in 0..4 {
                    if r != s {
                        hi[(r, s)] = h.entries()[(r, s)] * Complex64::from_polar(1.0, (energies[r] - energies[s]) * t);
                    }
                }
            }
            // counter-rotating parts oscillate at ω₁₀ + ω
            let counter = Complex64::from_polar(p.rabi_frequency / 2.0, -(lab.qubit_frequency + lab.drive_frequency) * t);
            for (a, b) in [(0, 1), (2, 3)] {
                hi[(a, b)] -= counter;
                hi[(b, a)] -= counter.conj();
            }
            let rwa = four_level_rwa_lab(p.detuning, p.tls_detuning, p.rabi_frequency, p.coupling, t);
            assert!(max_abs(&(hi - rwa.entries())) < 1e-9);
        }
    }

    #[test]
    fn rwa_at_zero_time_is_rotating_without_diagonal() {
        let (d, dr, om, oc) = (0.4, 1.5, 3.0, 0.2);
        let rwa = four_level_rwa_lab(d, dr, om, oc, 0.0);
        let mut rot = four_level_rotating(d, dr, om, oc).into_entries();
        rot.fill_diagonal(Complex64::from(0.0));
        assert!(max_abs(&(rwa.entries() - rot)) < 1e-15);
    }

    #[test]
    fn rwa_zero_pattern() {
        let h = four_level_rwa_lab(0.4, 1.5, 3.0, 0.2, 0.9);
        for (a, b) in [("0g", "0e"), ("0g", "1e"), ("1g", "1e"), ("0g", "0g"), ("1e", "1e")] {
            assert_eq!(h.entry(a, b), c(0.0, 0.0));
            assert_eq!(h.entry(b, a), c(0.0, 0.0));
        }
        assert_relative_eq!(h.entry("1g", "0e").norm(), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn rotating_example() {
        let h = four_level_rotating(0.0, 2.0, 10.0, 0.25);
        let diag: Vec<f64> = Basis::BARE_LABELS.iter().map(|l| h.entry(l, l).re).collect();
        assert_eq!(diag, vec![0.0, 0.0, 2.0, 2.0]);
        assert_eq!(h.entry("0g", "1g"), c(5.0, 0.0));
        assert_eq!(h.entry("0e", "1e"), c(5.0, 0.0));
        assert_eq!(h.entry("1g", "0e"), c(0.25, 0.0));
        assert_eq!(h.entry("0g", "0e"), c(0.0, 0.0));
    }

    #[test]
    fn effective_four_level() {
        let mut p = telegraph_set();
        let h = four_level_effective(&p);
        assert_eq!(h.entry("1e", "1e").im, -0.625);
        assert_eq!(h.entry("1g", "1g").im, -0.125);
        assert_eq!(h.entry("0g", "0g").im, 0.0);
        assert!(h.satisfies_invariants());
        // anti-Hermitian trace = −i(γ₁₀ + (γ₁₀ + Γ₁ₑ))/2
        let anti = (h.entries() - h.entries().adjoint()) / c(2.0, 0.0);
        assert_relative_eq!(anti.trace().im, -(p.relaxation + p.excited_decay()) / 2.0, epsilon = 1e-15);

        p.relaxation = 0.0;
        p.tunneling = 0.0;
        assert_eq!(four_level_effective(&p).hermiticity_residual(), 0.0);
    }

    #[test]
    fn dressed_resonant() {
        let v = dressed_transform(0.0, 7.0).unwrap();
        assert_eq!(v.kind(), TransformKind::Dressed { alpha: FRAC_PI_2 });
        for z in v.entries().iter().filter(|z| z.norm() > 0.0) {
            assert_relative_eq!(z.norm(), FRAC_1_SQRT_2, epsilon = 1e-15);
        }
        assert!(v.unitarity_residual() < 1e-15);
    }

    #[test]
    fn dressed_angle_off_resonance() {
        let alpha = dressing_angle(1.0, 5.0).unwrap();
        assert_relative_eq!(alpha, 1.373_400_766_945_016, epsilon = 1e-12);
        assert_eq!(dressed_transform(0.0, 0.0), Err(HamiltonianError::UndefinedDressingAngle));
    }

    #[test]
    fn to_dressed_by_explicit_product() {
        let p = telegraph_set();
        let h = four_level_rotating_from(&p);
        let d = to_dressed(&h, &dressed_transform(p.detuning, p.rabi_frequency).unwrap()).unwrap();
        assert_eq!(d.labels(), &Basis::DRESSED_LABELS);
        let diag: Vec<f64> = Basis::DRESSED_LABELS.iter().map(|l| d.entry(l, l).re).collect();
        for (got, want) in diag.iter().zip([5.0, -5.0, 5.0, -5.0]) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
        for (a, b, sign) in [("Ae", "Be", 1.0), ("Ae", "Bg", 1.0), ("Ag", "Be", -1.0), ("Ag", "Bg", -1.0)] {
            assert_relative_eq!(d.entry(a, b).re, sign * 0.125, epsilon = 1e-12);
        }
        assert_relative_eq!(d.entry("Ae", "Ag").norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn to_dressed_rejects_wrong_basis() {
        let v = dressed_transform(0.0, 1.0).unwrap();
        assert!(matches!(
            to_dressed(&qubit_rotating(0.0, 1.0), &v),
            Err(HamiltonianError::BasisMismatch { .. })
        ));
        let small = BasisTransform::from_parts(TransformKind::Dressed { alpha: 0.0 }, DMatrix::identity(2, 2));
        assert!(matches!(
            to_dressed(&four_level_rotating(0.0, 0.0, 1.0, 0.1), &small),
            Err(HamiltonianError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn decoupled_dressed_is_block_diagonal() {
        let h = dressed_closed_form(0.5, 1.0, 3.0, 0.0).unwrap();
        for a in ["Ae", "Ag"] {
            for b in ["Be", "Bg"] {
                assert_eq!(h.entry(a, b), c(0.0, 0.0));
            }
        }
    }

    #[test]
    fn json_dump_shape() {
        let j = qubit_effective(0.0, 10.0, 0.25, 1.0).to_json();
        assert_eq!(j["dimension"], 2);
        assert_eq!(j["entries"][1][1][1], -0.625);
        assert_eq!(j["basis_labels"][0], "0");
    }

    proptest! {
        #[test]
        fn effective_qubit_eigenvalues_decay(d in -20.0..20.0f64, om in 0.0..20.0f64, g in 0.0..3.0f64, t in 0.0..3.0f64) {
            let (a, b) = eig2(qubit_effective(d, om, g, t).entries());
            prop_assert!(a.im <= 1e-12 && b.im <= 1e-12);
        }

        #[test]
        fn lab_frame_real_symmetric(d in -3.0..3.0f64, dr in -3.0..3.0f64, om in 0.0..10.0f64, oc in 0.0..1.0f64, t in 0.0..50.0f64) {
            let p = ModelParams { detuning: d, tls_detuning: dr, rabi_frequency: om, coupling: oc, ..ModelParams::default() };
            let h = four_level_lab(&LabFrame::from_params(&p, 30.0), t);
            prop_assert!(h.entries().iter().all(|z| z.im == 0.0));
            prop_assert_eq!(h.entries().transpose(), h.entries().clone());
        }

        #[test]
        fn hermitian_builders(d in -10.0..10.0f64, dr in -10.0..10.0f64, om in 0.0..20.0f64, oc in 0.0..2.0f64, t in 0.0..100.0f64) {
            for h in [
                qubit_rotating(d, om),
                four_level_rotating(d, dr, om, oc),
                four_level_rwa_lab(d, dr, om, oc, t),
            ] {
                prop_assert!(h.is_hermitian() && h.satisfies_invariants());
                prop_assert!(h.hermiticity_residual() <= 1e-12 * h.max_abs().max(1.0));
            }
        }

        #[test]
        fn frame_identity(d in -10.0..10.0f64, dr in -15.0..15.0f64, om in 0.0..20.0f64, oc in 0.0..2.0f64, t in 0.0..20.0f64) {
            prop_assert!(frame_identity_residual(d, dr, om, oc, t) <= 1e-8);
            prop_assert!(frame_identity_residual_fd(d, dr, om, oc, t, 1e-6) <= 1e-5);
        }

        #[test]
        fn dressed_identity(d in -10.0..10.0f64, dr in -15.0..15.0f64, om in 0.01..20.0f64, oc in 0.0..2.0f64, resonant in any::<bool>()) {
            let d = if resonant { 0.0 } else { d };
            prop_assert!(dressed_identity_residual(d, dr, om, oc).unwrap() <= 1e-12);
            prop_assert!(dressed_transform(d, om).unwrap().unitarity_residual() <= 1e-12);
        }

        #[test]
        fn dressing_preserves_spectrum(d in -5.0..5.0f64, dr in -10.0..10.0f64, om in 0.1..10.0f64, oc in 0.0..1.0f64) {
            let h = four_level_rotating(d, dr, om, oc);
            let hd = to_dressed(&h, &dressed_transform(d, om).unwrap()).unwrap();
            let scale = h.max_abs().max(1.0);
            for (a, b) in power_traces(h.entries()).iter().zip(power_traces(hd.entries())) {
                prop_assert!((a - b).norm() <= 1e-9 * scale.powi(4));
            }
            let mut e1: Vec<f64> = h.entries().clone().symmetric_eigenvalues().iter().copied().collect();
            let mut e2: Vec<f64> = hd.entries().clone().symmetric_eigenvalues().iter().copied().collect();
            e1.sort_by(f64::total_cmp);
            e2.sort_by(f64::total_cmp);
            for (a, b) in e1.iter().zip(&e2) {
                prop_assert!((a - b).abs() <= 1e-10 * scale);
            }
        }
    }
}

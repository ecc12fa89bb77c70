//! Parameter containers and unit conventions.
//!
//! Internally everything is expressed in reduced units: ħ = 1 and rates,
//! frequencies and detunings are dimensionless multiples of the tunneling
//! rate Γ₁ₑ of the `|1e⟩` level, so times are in units of 1/Γ₁ₑ.
//! [`DeviceParams`] carries SI-level device quantities and is only needed
//! when starting from junction/defect properties; every simulation entry
//! point takes [`ModelParams`] directly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reduced Planck constant in J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Largest allowed value of `δt · (fastest frequency or rate)` for the
/// first-order propagator.
pub const STEP_BOUND: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("mixing angle undefined: TLS asymmetry and tunneling energy are both zero")]
    UndefinedMixingAngle,
    #[error("invalid device parameter `{field}`: {message}")]
    InvalidDevice { field: &'static str, message: String },
}

/// Device-level description of the junction, the defect and the drive.
///
/// Frequencies are angular (rad/s), currents in amperes, capacitance in
/// farads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// δI₀ = I₀R − I₀L, change of the critical current between the two
    /// defect configurations. May have either sign.
    pub critical_current_delta: f64,
    /// Asymmetry energy ε of the defect double well. May have either sign.
    pub tls_asymmetry: f64,
    /// Tunneling energy Δ₀ of the defect, Δ₀ ≥ 0.
    pub tls_tunneling: f64,
    /// Qubit transition frequency ω₁₀.
    pub qubit_frequency: f64,
    /// Junction capacitance C.
    pub capacitance: f64,
    /// Microwave current amplitude I_μw.
    pub microwave_amplitude: f64,
    /// Microwave angular frequency ω.
    pub microwave_frequency: f64,
}

/// Quantities derived from [`DeviceParams`], all angular frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedModel {
    /// ω_TLS = √(ε² + Δ₀²).
    pub tls_frequency: f64,
    /// θ = atan2(Δ₀, ε), in [0, π].
    pub mixing_angle: f64,
    /// Signed qubit-defect coupling Ω_c (sign follows δI₀).
    pub coupling: f64,
    /// Rabi frequency Ω_m.
    pub rabi_frequency: f64,
}

impl DeviceParams {
    fn check(&self) -> Result<(), ModelError> {
        let positive = [
            ("qubit_frequency", self.qubit_frequency),
            ("capacitance", self.capacitance),
            ("microwave_frequency", self.microwave_frequency),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::InvalidDevice {
                    field,
                    message: format!("must be finite and > 0, got {value}"),
                });
            }
        }
        if !(self.microwave_amplitude.is_finite() && self.microwave_amplitude >= 0.0) {
            return Err(ModelError::InvalidDevice {
                field: "microwave_amplitude",
                message: format!("must be finite and >= 0, got {}", self.microwave_amplitude),
            });
        }
        if !(self.tls_tunneling.is_finite() && self.tls_tunneling >= 0.0) {
            return Err(ModelError::InvalidDevice {
                field: "tls_tunneling",
                message: format!("must be finite and >= 0, got {}", self.tls_tunneling),
            });
        }
        if !self.tls_asymmetry.is_finite() || !self.critical_current_delta.is_finite() {
            return Err(ModelError::InvalidDevice {
                field: "tls_asymmetry",
                message: "asymmetry and critical current delta must be finite".into(),
            });
        }
        Ok(())
    }

    /// Zero-point scale √(1 / (2ħω₁₀C)) converting a current amplitude into
    /// an angular frequency.
    pub fn current_to_frequency(&self) -> f64 {
        (1.0 / (2.0 * HBAR * self.qubit_frequency * self.capacitance)).sqrt()
    }
}

/// Derive the defect frequency, mixing angle, coupling and Rabi frequency.
pub fn derive_model(dev: &DeviceParams) -> Result<DerivedModel, ModelError> {
    dev.check()?;
    if dev.tls_asymmetry == 0.0 && dev.tls_tunneling == 0.0 {
        return Err(ModelError::UndefinedMixingAngle);
    }
    let tls_frequency = dev.tls_asymmetry.hypot(dev.tls_tunneling);
    let mixing_angle = dev.tls_tunneling.atan2(dev.tls_asymmetry);
    let scale = dev.current_to_frequency();
    Ok(DerivedModel {
        tls_frequency,
        mixing_angle,
        coupling: dev.critical_current_delta * mixing_angle.sin() / 2.0 * scale,
        rabi_frequency: dev.microwave_amplitude * scale,
    })
}

/// Reduced-unit parameters of the four-level (or two-level) model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Δ = ω₁₀ − ω.
    pub detuning: f64,
    /// Δ_r = ω_TLS − ω₁₀.
    pub tls_detuning: f64,
    /// Ω_m.
    pub rabi_frequency: f64,
    /// Ω_c.
    pub coupling: f64,
    /// γ₁₀, qubit relaxation rate (same for both defect states).
    pub relaxation: f64,
    /// Γ₁ₑ, tunneling rate out of `|1e⟩` (or `|1⟩` for the bare qubit).
    /// Equal to 1 in reduced units unless deliberately scanned.
    pub tunneling: f64,
    /// τ_m, length of one measurement run.
    pub measurement_time: f64,
    /// δt, integration step.
    pub time_step: f64,
}

impl Default for ModelParams {
    /// The parameter set used for the dark-period figures: Δ = 0,
    /// γ₁₀ = Ω_c = 1/4, Ω_m = 10, τ_m = 10, Δ_r = 2.
    fn default() -> Self {
        Self {
            detuning: 0.0,
            tls_detuning: 2.0,
            rabi_frequency: 10.0,
            coupling: 0.25,
            relaxation: 0.25,
            tunneling: 1.0,
            measurement_time: 10.0,
            time_step: 1e-3,
        }
    }
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl ModelParams {
    /// Build reduced parameters from a derived device model.
    ///
    /// `relaxation` and `tunneling` are angular rates in the same units as
    /// the device frequencies; everything is rescaled by `tunneling`.
    /// `measurement_time` and `time_step` are given in units of 1/Γ₁ₑ.
    /// The coupling is reported as |Ω_c|.
    pub fn from_device(
        dev: &DeviceParams,
        derived: &DerivedModel,
        relaxation: f64,
        tunneling: f64,
        measurement_time: f64,
        time_step: f64,
    ) -> Self {
        let unit = tunneling;
        Self {
            detuning: (dev.qubit_frequency - dev.microwave_frequency) / unit,
            tls_detuning: (derived.tls_frequency - dev.qubit_frequency) / unit,
            rabi_frequency: derived.rabi_frequency / unit,
            coupling: derived.coupling.abs() / unit,
            relaxation: relaxation / unit,
            tunneling: 1.0,
            measurement_time,
            time_step,
        }
    }

    /// Total decay rate of the `|1e⟩` level, γ₁₀ + Γ₁ₑ.
    pub fn excited_decay(&self) -> f64 {
        self.relaxation + self.tunneling
    }

    /// The fastest frequency scale entering the step-size bound.
    pub fn fastest_scale(&self) -> f64 {
        [
            self.rabi_frequency,
            self.coupling,
            self.detuning.abs(),
            self.tls_detuning.abs(),
            self.excited_decay(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Largest time step satisfying the first-order step bound.
    pub fn max_time_step(&self) -> f64 {
        STEP_BOUND / self.fastest_scale()
    }

    pub fn with_tls_detuning(mut self, tls_detuning: f64) -> Self {
        self.tls_detuning = tls_detuning;
        self
    }

    pub fn with_time_step(mut self, time_step: f64) -> Self {
        self.time_step = time_step;
        self
    }
}

/// Check every invariant of `params`; an empty list means valid.
pub fn validate(params: &ModelParams) -> Vec<Violation> {
    let mut out = validate_basic(params);
    let bound = params.time_step * params.fastest_scale();
    if params.time_step > 0.0 && bound > STEP_BOUND {
        out.push(Violation {
            field: "time_step",
            message: format!(
                "time_step * fastest scale = {bound:.4} exceeds {STEP_BOUND} \
                 (time_step must be <= {:.3e})",
                params.max_time_step()
            ),
        });
    }
    out
}

/// Like [`validate`], but with the step bound applied only to the decay
/// rates. Used with the exact-exponential propagator, whose coherent part
/// carries no discretisation error.
pub fn validate_for_exponential(params: &ModelParams) -> Vec<Violation> {
    let mut out = validate_basic(params);
    let bound = params.time_step * params.excited_decay();
    if params.time_step > 0.0 && bound > STEP_BOUND {
        out.push(Violation {
            field: "time_step",
            message: format!(
                "time_step * (relaxation + tunneling) = {bound:.4} exceeds {STEP_BOUND}"
            ),
        });
    }
    out
}

fn validate_basic(params: &ModelParams) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut finite = |field: &'static str, value: f64| {
        if !value.is_finite() {
            out.push(Violation { field, message: format!("must be finite, got {value}") });
            false
        } else {
            true
        }
    };
    let checks = [
        ("detuning", params.detuning),
        ("tls_detuning", params.tls_detuning),
        ("rabi_frequency", params.rabi_frequency),
        ("coupling", params.coupling),
        ("relaxation", params.relaxation),
        ("tunneling", params.tunneling),
        ("measurement_time", params.measurement_time),
        ("time_step", params.time_step),
    ];
    let all_finite = checks.iter().map(|&(f, v)| finite(f, v)).filter(|ok| !ok).count() == 0;
    if !all_finite {
        return out;
    }
    for (field, value) in [
        ("rabi_frequency", params.rabi_frequency),
        ("coupling", params.coupling),
        ("relaxation", params.relaxation),
        ("tunneling", params.tunneling),
    ] {
        if value < 0.0 {
            out.push(Violation { field, message: format!("must be >= 0, got {value}") });
        }
    }
    for (field, value) in [
        ("measurement_time", params.measurement_time),
        ("time_step", params.time_step),
    ] {
        if value <= 0.0 {
            out.push(Violation { field, message: format!("must be > 0, got {value}") });
        }
    }
    out
}

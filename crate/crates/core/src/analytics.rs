//! First-order theory of the dark-period rate and statistical extraction of
//! dark periods from simulated records.

use std::io::{self, Write};

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::hamiltonians::dressing_angle;
use crate::model::ModelParams;
use crate::trajectory::{ContinuousTrajectory, TelegraphSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("dressing angle undefined for zero detuning and zero Rabi frequency")]
    UndefinedAngle,
    #[error("resonant formula needs zero detuning, got {0}; use the general rate")]
    NotResonant(f64),
    #[error("invalid occupation weights ({0}, {1}): must be >= 0 and sum to 1")]
    InvalidWeights(f64, f64),
    #[error("enter threshold {enter} must exceed exit threshold {exit}")]
    ThresholdOrder { enter: f64, exit: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Coupling coefficients, detunings and weights of the four dressed
/// transitions `A_i → B_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingTable {
    pub alpha: f64,
    pub lambda_ae_be: f64,
    pub lambda_ae_bg: f64,
    pub lambda_ag_be: f64,
    pub lambda_ag_bg: f64,
    pub delta_ae_be: f64,
    pub delta_ae_bg: f64,
    pub delta_ag_be: f64,
    pub delta_ag_bg: f64,
    pub rho_ae: f64,
    pub rho_ag: f64,
}

impl CouplingTable {
    /// `(ρ_i, λ_ij, Δ_ij)` for the pairs (Ae,Be), (Ae,Bg), (Ag,Be), (Ag,Bg).
    pub fn terms(&self) -> [(f64, f64, f64); 4] {
        [
            (self.rho_ae, self.lambda_ae_be, self.delta_ae_be),
            (self.rho_ae, self.lambda_ae_bg, self.delta_ae_bg),
            (self.rho_ag, self.lambda_ag_be, self.delta_ag_be),
            (self.rho_ag, self.lambda_ag_bg, self.delta_ag_bg),
        ]
    }
}

pub fn coupling_table(
    detuning: f64,
    rabi: f64,
    tls_detuning: f64,
    rho_ae: f64,
    rho_ag: f64,
) -> Result<CouplingTable, AnalyticsError> {
    if !(rho_ae >= 0.0 && rho_ag >= 0.0 && (rho_ae + rho_ag - 1.0).abs() <= 1e-12) {
        return Err(AnalyticsError::InvalidWeights(rho_ae, rho_ag));
    }
    let alpha = dressing_angle(detuning, rabi).map_err(|_| AnalyticsError::UndefinedAngle)?;
    let (s, c) = (alpha / 2.0).sin_cos();
    let r = detuning.hypot(rabi);
    let base = tls_detuning + detuning;
    Ok(CouplingTable {
        alpha,
        lambda_ae_be: s * c,
        lambda_ae_bg: c * c,
        lambda_ag_be: -s * s,
        lambda_ag_bg: -s * c,
        delta_ae_be: base,
        delta_ae_bg: base - r,
        delta_ag_be: base + r,
        delta_ag_bg: base,
        rho_ae,
        rho_ag,
    })
}

/// Decoherence rate `γ = (2γ₁₀ + Γ₁ₑ)/2` of the dressed transitions.
pub fn linewidth(params: &ModelParams) -> f64 {
    (2.0 * params.relaxation + params.tunneling) / 2.0
}

fn lorentzian(delta: f64, gamma: f64) -> f64 {
    gamma / (delta * delta + gamma * gamma)
}

/// Rate of leaving the dark subspace on resonance, with equal dressed
/// weights:
/// `Γ_D = (Ω_c²/2) Σ ρ_i γ/(Δ_ij² + γ²)` over `Δ_ij ∈ {Δ_r, Δ_r, Δ_r−Ω_m, Δ_r+Ω_m}`.
pub fn dark_rate_resonant(params: &ModelParams) -> Result<f64, AnalyticsError> {
    if params.detuning != 0.0 {
        return Err(AnalyticsError::NotResonant(params.detuning));
    }
    let g = linewidth(params);
    let dr = params.tls_detuning;
    let om = params.rabi_frequency;
    let sum = 0.5 * (2.0 * lorentzian(dr, g) + (lorentzian(dr - om, g) + lorentzian(dr + om, g)));
    Ok(params.coupling.powi(2) / 2.0 * sum)
}

/// Off-resonant generalization `Γ_D = 2Ω_c² Σ ρ_i λ_ij² γ/(Δ_ij² + γ²)`.
pub fn dark_rate_general(params: &ModelParams, table: &CouplingTable) -> f64 {
    let g = linewidth(params);
    let sum: f64 = table.terms().iter().map(|(rho, l, d)| rho * l * l * lorentzian(*d, g)).sum();
    2.0 * params.coupling.powi(2) * sum
}

/// [`dark_rate_general`] with equal dressed weights `ρ_Ae = ρ_Ag = 1/2`.
pub fn dark_rate(params: &ModelParams) -> Result<f64, AnalyticsError> {
    let t = coupling_table(params.detuning, params.rabi_frequency, params.tls_detuning, 0.5, 0.5)?;
    Ok(dark_rate_general(params, &t))
}

/// TLS detunings `(−R−Δ, −Δ, R−Δ)` of the three rate maxima, with
/// `R = √(Δ² + Ω_m²)`.
pub fn peak_positions(detuning: f64, rabi: f64) -> (f64, f64, f64) {
    let r = detuning.hypot(rabi);
    (-r - detuning, -detuning, r - detuning)
}

/// Mean number of consecutive dark runs, `1/(1 − e^{−Γ_D τ_m})`.
/// Returns `f64::INFINITY` when `Γ_D = 0`.
pub fn expected_dark_width(dark_rate: f64, measurement_time: f64) -> f64 {
    if dark_rate == 0.0 {
        return f64::INFINITY;
    }
    -1.0 / (-dark_rate * measurement_time).exp_m1()
}

/// Analytic and (optionally) simulated dark rate over a TLS-detuning grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DarkRateSpectrum {
    pub tls_detuning: Vec<f64>,
    pub analytic: Vec<f64>,
    pub simulated: Option<Vec<f64>>,
    pub std_err: Option<Vec<f64>>,
}

impl DarkRateSpectrum {
    pub fn analytic(params: &ModelParams, grid: &[f64]) -> Result<Self, AnalyticsError> {
        let analytic = grid
            .iter()
            .map(|dr| dark_rate(&params.with_tls_detuning(*dr)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { tls_detuning: grid.to_vec(), analytic, simulated: None, std_err: None })
    }

    /// Columns `tls_detuning,rate_analytic,rate_sim,stderr`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "tls_detuning,rate_analytic,rate_sim,stderr")?;
        for (k, (dr, a)) in self.tls_detuning.iter().zip(&self.analytic).enumerate() {
            let s = self.simulated.as_ref().map(|v| v[k].to_string()).unwrap_or_default();
            let e = self.std_err.as_ref().map(|v| v[k].to_string()).unwrap_or_default();
            writeln!(w, "{dr},{a},{s},{e}")?;
        }
        Ok(())
    }
}

/// Indices of strict interior local maxima (plateaus count once, at their
/// first point).
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let n = values.len();
    let mut k = 1;
    while k + 1 < n {
        if values[k] > values[k - 1] {
            let mut j = k;
            while j + 1 < n && values[j + 1] == values[k] {
                j += 1;
            }
            if j + 1 < n && values[j + 1] < values[k] {
                out.push(k);
            }
            k = j + 1;
        } else {
            k += 1;
        }
    }
    out
}

/// Mean and standard error of the mean.
pub fn mean_and_std_err(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DarkPeriodKind {
    /// Widths counted in measurement runs.
    Widths,
    /// Lifetimes in continuous time.
    Lifetimes,
}

/// Dark periods retained by a minimum-length filter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DarkPeriodStats {
    pub kind: DarkPeriodKind,
    pub samples: Vec<f64>,
    pub count: usize,
    pub mean: f64,
    pub std_err: f64,
    /// `min_dark_runs` for widths or `min_dwell` for lifetimes.
    pub min_length: f64,
}

impl DarkPeriodStats {
    pub fn new(kind: DarkPeriodKind, samples: Vec<f64>, min_length: f64) -> Self {
        let (mean, std_err) = mean_and_std_err(&samples);
        Self { kind, count: samples.len(), samples, mean, std_err, min_length }
    }

    /// Mean of the unfiltered distribution assuming it is memoryless, so
    /// that periods surviving the filter exceed it by the unfiltered mean:
    /// `mean − (min_dark_runs − 1)` for widths, `mean − min_dwell` for
    /// lifetimes.
    pub fn memoryless_mean(&self) -> f64 {
        match self.kind {
            DarkPeriodKind::Widths => self.mean - (self.min_length - 1.0),
            DarkPeriodKind::Lifetimes => self.mean - self.min_length,
        }
    }

    /// `1/T_D` from [`Self::memoryless_mean`] with its propagated error.
    pub fn rate(&self) -> (f64, f64) {
        let m = self.memoryless_mean();
        (1.0 / m, self.std_err / (m * m))
    }
}

/// Incremental run-length filter for telegraph outcomes. A dark period is
/// a maximal streak of at least `min_dark_runs` un-tunneled runs bounded on
/// both sides by tunneled runs.
#[derive(Debug, Clone)]
pub struct DarkRunFilter {
    min_dark_runs: usize,
    streak: usize,
    seen_tunnel: bool,
}

impl DarkRunFilter {
    pub const DEFAULT_MIN_DARK_RUNS: usize = 3;

    pub fn new(min_dark_runs: usize) -> Self {
        Self { min_dark_runs: min_dark_runs.max(1), streak: 0, seen_tunnel: false }
    }

    /// Feed one run; returns the width of a dark period closed by it.
    pub fn push(&mut self, tunneled: bool) -> Option<usize> {
        if !tunneled {
            self.streak += 1;
            return None;
        }
        let width = self.streak;
        let complete = self.seen_tunnel;
        self.streak = 0;
        self.seen_tunnel = true;
        (complete && width >= self.min_dark_runs).then_some(width)
    }
}

/// Widths of the dark periods in a tunneled/un-tunneled sequence.
pub fn dark_widths(flags: &[bool], min_dark_runs: usize) -> Vec<usize> {
    let mut f = DarkRunFilter::new(min_dark_runs);
    flags.iter().filter_map(|t| f.push(*t)).collect()
}

pub fn extract_dark_periods_telegraph(series: &TelegraphSeries, min_dark_runs: usize) -> DarkPeriodStats {
    let widths = dark_widths(&series.tunneled_flags(), min_dark_runs);
    DarkPeriodStats::new(
        DarkPeriodKind::Widths,
        widths.into_iter().map(|w| w as f64).collect(),
        min_dark_runs.max(1) as f64,
    )
}

/// Hysteresis segmentation of the dark-subspace population `p_A`. An
/// interval starts when `p_A` rises above `enter` and ends when it falls
/// below `exit`; intervals shorter than `min_dwell` are dropped, and so is
/// any interval begun before `p_A` was first seen at or below `exit`.
#[derive(Debug, Clone)]
pub struct DarkSegmenter {
    enter: f64,
    exit: f64,
    min_dwell: f64,
    armed: bool,
    start: Option<f64>,
}

impl DarkSegmenter {
    pub const DEFAULT_ENTER: f64 = 0.9;
    pub const DEFAULT_EXIT: f64 = 0.5;
    pub const DEFAULT_MIN_DWELL: f64 = 1.0;

    pub fn new(enter: f64, exit: f64, min_dwell: f64) -> Result<Self, AnalyticsError> {
        if !(enter > exit) {
            return Err(AnalyticsError::ThresholdOrder { enter, exit });
        }
        Ok(Self { enter, exit, min_dwell, armed: false, start: None })
    }

    pub fn is_dark(&self) -> bool {
        self.start.is_some()
    }

    /// Feed one sample; returns the lifetime of a dark interval it closes.
    pub fn push(&mut self, time: f64, p_dark: f64) -> Option<f64> {
        match self.start {
            None => {
                if p_dark > self.enter && self.armed {
                    self.start = Some(time);
                } else if p_dark <= self.exit {
                    self.armed = true;
                }
                None
            }
            Some(t0) if p_dark < self.exit => {
                self.start = None;
                self.armed = true;
                let life = time - t0;
                (life >= self.min_dwell).then_some(life)
            }
            Some(_) => None,
        }
    }
}

pub fn extract_dark_lifetimes_continuous(
    traj: &ContinuousTrajectory,
    enter_threshold: f64,
    exit_threshold: f64,
    min_dwell: f64,
) -> Result<DarkPeriodStats, AnalyticsError> {
    let mut seg = DarkSegmenter::new(enter_threshold, exit_threshold, min_dwell)?;
    let lifetimes: Vec<f64> = traj
        .time_grid
        .iter()
        .zip(&traj.subspace_b_population)
        .filter_map(|(t, b)| seg.push(*t, 1.0 - b))
        .collect();
    Ok(DarkPeriodStats::new(DarkPeriodKind::Lifetimes, lifetimes, min_dwell))
}

/// Outcome of a chi-square goodness-of-fit test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub critical_1pct: f64,
}

impl ChiSquareTest {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value > alpha
    }
}

/// Pearson statistic `Σ (O − E)²/E` with `dof = bins − 1 − fitted`.
pub fn chi_square(observed: &[f64], expected: &[f64], fitted: usize) -> Result<ChiSquareTest, AnalyticsError> {
    if observed.len() != expected.len() || observed.len() < fitted + 2 {
        return Err(AnalyticsError::InvalidInput("need matching bins and positive degrees of freedom".into()));
    }
    if expected.iter().any(|e| !(*e > 0.0)) {
        return Err(AnalyticsError::InvalidInput("expected counts must be positive".into()));
    }
    let statistic: f64 = observed.iter().zip(expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = observed.len() - 1 - fitted;
    let dist = ChiSquared::new(dof as f64).map_err(|e| AnalyticsError::InvalidInput(e.to_string()))?;
    Ok(ChiSquareTest { statistic, dof, p_value: dist.sf(statistic), critical_1pct: dist.inverse_cdf(0.99) })
}

/// Goodness of fit of widths `W ≥ min` to the shifted geometric law
/// `P(W = min + j) = (1 − q) q^j` of mean `mean = 1/(1 − q)` (the mean of
/// `W − min + 1`). Cells are single widths while the expected count is at
/// least 5; the tail is pooled.
pub fn geometric_fit(widths: &[usize], min: usize, mean: f64, fitted: usize) -> Result<ChiSquareTest, AnalyticsError> {
    if !(mean > 1.0) || widths.is_empty() {
        return Err(AnalyticsError::InvalidInput("need widths and a mean above 1".into()));
    }
    let n = widths.len() as f64;
    let q = 1.0 - 1.0 / mean;
    let mut observed = Vec::new();
    let mut expected = Vec::new();
    let mut j = 0usize;
    let mut tail = 1.0;
    loop {
        let p = (1.0 - q) * q.powi(j as i32);
        if n * p < 5.0 || n * (tail - p) < 5.0 {
            break;
        }
        observed.push(widths.iter().filter(|w| **w == min + j).count() as f64);
        expected.push(n * p);
        tail -= p;
        j += 1;
    }
    observed.push(widths.iter().filter(|w| **w >= min + j).count() as f64);
    expected.push(n * tail);
    chi_square(&observed, &expected, fitted)
}

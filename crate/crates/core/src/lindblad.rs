//! Master-equation reference for ensemble averages of the jump engine.
//!
//! The system is extended by one absorbing level `OUT` that collects the
//! tunneled population, so the evolution stays trace preserving and the
//! cumulative tunneling probability is the `OUT` population.

use std::io::{self, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::hamiltonians::{max_abs, HamiltonianMatrix};
use crate::trajectory::{JumpChannel, JumpTarget};

/// Label of the absorbing level.
pub const OUT: &str = "OUT";

/// Largest trace drift tolerated before integration is aborted.
pub const MAX_TRACE_DRIFT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LindbladError {
    #[error("trace drifted by {drift:.3e} at t = {time}; reduce the step")]
    TraceDrift { time: f64, drift: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Density matrix over the system labels followed by `OUT`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    labels: Vec<&'static str>,
    entries: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// `|label⟩⟨label|` for a system of the given labels.
    pub fn pure(system_labels: &[&'static str], label: &str) -> Result<Self, LindbladError> {
        let mut labels = system_labels.to_vec();
        labels.push(OUT);
        let k = labels
            .iter()
            .position(|l| *l == label)
            .ok_or_else(|| LindbladError::InvalidInput(format!("unknown label {label:?}")))?;
        let n = labels.len();
        let mut entries = DMatrix::zeros(n, n);
        entries[(k, k)] = Complex64::new(1.0, 0.0);
        Ok(Self { labels, entries })
    }

    pub fn labels(&self) -> &[&'static str] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn population(&self, label: &str) -> f64 {
        let k = self.labels.iter().position(|l| *l == label).unwrap_or_else(|| panic!("unknown label {label:?}"));
        self.entries[(k, k)].re
    }

    pub fn trace(&self) -> f64 {
        self.entries.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        max_abs(&(&self.entries - self.entries.adjoint()))
    }

    pub fn min_diagonal(&self) -> f64 {
        self.entries.diagonal().iter().map(|z| z.re).fold(f64::INFINITY, f64::min)
    }
}

struct Generator {
    h: DMatrix<Complex64>,
    /// (source, target or None for OUT, rate)
    channels: Vec<(usize, usize, f64)>,
}

impl Generator {
    fn apply(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let i = Complex64::new(0.0, 1.0);
        let mut d = (&self.h * rho - rho * &self.h) * (-i);
        let n = rho.nrows();
        for &(s, t, rate) in &self.channels {
            let half = 0.5 * rate;
            d[(t, t)] += rho[(s, s)] * rate;
            for k in 0..n {
                d[(s, k)] -= rho[(s, k)] * half;
                d[(k, s)] -= rho[(k, s)] * half;
            }
        }
        d
    }
}

/// States of a master-equation integration on a time grid.
#[derive(Debug, Clone)]
pub struct LindbladSolution {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

impl LindbladSolution {
    pub fn population(&self, label: &str) -> Vec<f64> {
        self.states.iter().map(|r| r.population(label)).collect()
    }

    /// Cumulative tunneling probability.
    pub fn p_out(&self) -> Vec<f64> {
        self.population(OUT)
    }

    /// Columns `t`, one per label, with the `OUT` population last as `P_OUT`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let Some(first) = self.states.first() else { return Ok(()) };
        let names: Vec<String> = first
            .labels()
            .iter()
            .map(|l| if *l == OUT { "P_OUT".to_string() } else { format!("p_{l}") })
            .collect();
        writeln!(w, "t,{}", names.join(","))?;
        for (t, r) in self.times.iter().zip(&self.states) {
            let row: Vec<String> = r.entries.diagonal().iter().map(|z| format!("{}", z.re)).collect();
            writeln!(w, "{t},{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Integrate the master equation with fixed-step fourth-order Runge–Kutta
/// of step `dt`, recording the state at every time of `t_grid`
/// (non-decreasing, starting at or after 0). A shortened final step lands
/// exactly on each grid time.
///
/// `h` is the Hermitian system Hamiltonian; every channel contributes the
/// dissipator of `√rate |target⟩⟨source|`, with absorbing channels feeding
/// `OUT`.
pub fn evolve(
    rho0: &DensityMatrix,
    h: &HamiltonianMatrix,
    channels: &[JumpChannel],
    dt: f64,
    t_grid: &[f64],
) -> Result<LindbladSolution, LindbladError> {
    let basis = h.basis();
    let n = basis.dim() + 1;
    if rho0.dim() != n || rho0.labels[..n - 1] != *basis.labels() {
        return Err(LindbladError::InvalidInput("initial state labels do not match the Hamiltonian".into()));
    }
    if !(dt > 0.0) {
        return Err(LindbladError::InvalidInput(format!("step must be > 0, got {dt}")));
    }
    if t_grid.first().is_some_and(|t| *t < 0.0) || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(LindbladError::InvalidInput("time grid must be non-decreasing from t >= 0".into()));
    }
    let mut compiled = Vec::with_capacity(channels.len());
    for c in channels {
        c.check(basis).map_err(LindbladError::InvalidInput)?;
        let t = match c.target {
            JumpTarget::Absorb => n - 1,
            JumpTarget::State(l) => basis.idx(l),
        };
        compiled.push((basis.idx(c.source), t, c.rate));
    }
    let mut hx = DMatrix::zeros(n, n);
    hx.view_mut((0, 0), (n - 1, n - 1)).copy_from(&h.hermitian_part().into_entries());
    let gen = Generator { h: hx, channels: compiled };

    let mut rho = rho0.entries.clone();
    let trace0 = rho0.trace();
    let mut t = 0.0;
    let mut times = Vec::with_capacity(t_grid.len());
    let mut states = Vec::with_capacity(t_grid.len());
    for &target in t_grid {
        while target - t > 1e-12 * dt.max(target) {
            let h_step = (target - t).min(dt);
            let k1 = gen.apply(&rho);
            let k2 = gen.apply(&(&rho + k1.scale(h_step / 2.0)));
            let k3 = gen.apply(&(&rho + k2.scale(h_step / 2.0)));
            let k4 = gen.apply(&(&rho + k3.scale(h_step)));
            rho += (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(h_step / 6.0);
            t = if target - t <= dt { target } else { t + h_step };
            let drift = (rho.diagonal().iter().map(|z| z.re).sum::<f64>() - trace0).abs();
            if drift > MAX_TRACE_DRIFT || !drift.is_finite() {
                return Err(LindbladError::TraceDrift { time: t, drift });
            }
        }
        times.push(target);
        states.push(DensityMatrix { labels: rho0.labels.clone(), entries: rho.clone() });
    }
    Ok(LindbladSolution { times, states })
}

/// Instantaneous tunneling rate `dP_OUT/dt = Σ rate · ρ_source,source`
/// over the absorbing channels, at every time of `solution`.
pub fn tunneling_rate_curve(solution: &LindbladSolution, channels: &[JumpChannel]) -> Vec<f64> {
    solution
        .states
        .iter()
        .map(|r| {
            channels
                .iter()
                .filter(|c| c.is_absorbing())
                .map(|c| c.rate * r.population(c.source).max(0.0))
                .sum()
        })
        .collect()
}

/// Uniform grid `0, step, …, n·step`.
pub fn uniform_grid(step: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| k as f64 * step).collect()
}

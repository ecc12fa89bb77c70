//! The fast invariant suite run by `qjumps verify`.

use std::ops::ControlFlow;

use qjumps::analytics::{
    dark_rate, dark_rate_resonant, geometric_fit, DarkPeriodKind, DarkPeriodStats,
};
use qjumps::hamiltonians::{
    dressed_closed_form, dressed_identity_residual_with, dressed_transform, four_level_lab, four_level_rotating,
    four_level_rotating_from,
    four_level_rwa_lab, frame_identity_residual, frame_identity_residual_fd, qubit_effective, qubit_rotating, Basis,
    BasisTransform, HamiltonianError, LabFrame,
};
use qjumps::lindblad::{evolve, uniform_grid, DensityMatrix};
use qjumps::model::ModelParams;
use qjumps::trajectory::rng::{stream, ChaCha8Rng};
use qjumps::trajectory::{
    four_level_channels, qubit_channels, run_continuous_with, run_ensemble, run_single, run_telegraph, Propagator,
    StateVector, StepEvent, Stepper, TelegraphConfig,
};
use rand::Rng;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::experiments::{four_level_stepper, simulate_dark_widths};

/// Builder of the dressed transform `V(Δ, Ω_m)`.
pub type DressedBuilder = fn(f64, f64) -> Result<BasisTransform, HamiltonianError>;

pub const IDENTITY_DRAWS: usize = 100;
pub const RATE_DRAWS: usize = 1000;
pub const ANALYTIC_TOL: f64 = 1e-12;
pub const FD_TOL: f64 = 1e-5;
pub const FD_STEP: f64 = 1e-6;
/// Random times of the frame identity are drawn from `[0, DRAW_TIME]`.
pub const DRAW_TIME: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Debug, Clone, Copy)]
struct Draw {
    detuning: f64,
    tls_detuning: f64,
    rabi: f64,
    coupling: f64,
    t: f64,
}

/// Random parameters; every fourth draw is on resonance.
fn draw(rng: &mut ChaCha8Rng, k: usize) -> Draw {
    let detuning = if k.is_multiple_of(4) { 0.0 } else { rng.random_range(-20.0..20.0) };
    Draw {
        detuning,
        tls_detuning: rng.random_range(-20.0..20.0),
        rabi: rng.random_range(0.1..20.0),
        coupling: rng.random_range(0.0..5.0),
        t: rng.random_range(0.0..DRAW_TIME),
    }
}

fn worst<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    it.into_iter().fold(0.0, |a, b| if b.is_nan() { f64::NAN } else { a.max(b) })
}

pub fn hermiticity(seed: u64) -> CheckResult {
    let mut rng = stream(seed, 1);
    let mut bad = 0;
    for k in 0..IDENTITY_DRAWS {
        let d = draw(&mut rng, k);
        let m = ModelParams {
            detuning: d.detuning,
            tls_detuning: d.tls_detuning,
            rabi_frequency: d.rabi,
            coupling: d.coupling,
            ..ModelParams::default()
        };
        let lab = LabFrame::from_params(&m, 50.0);
        let mut mats = vec![
            qubit_rotating(d.detuning, d.rabi),
            qubit_effective(d.detuning, d.rabi, 0.25, 1.0),
            four_level_rotating(d.detuning, d.tls_detuning, d.rabi, d.coupling),
            four_level_rwa_lab(d.detuning, d.tls_detuning, d.rabi, d.coupling, d.t),
            four_level_lab(&lab, d.t),
        ];
        if let Ok(h) = dressed_closed_form(d.detuning, d.tls_detuning, d.rabi, d.coupling) {
            mats.push(h);
        }
        bad += mats.iter().filter(|h| !h.satisfies_invariants()).count();
    }
    CheckResult::new("hermiticity", bad == 0, format!("{bad} builder outputs violate their declared structure"))
}

pub fn frame_identity_analytic(seed: u64) -> CheckResult {
    let mut rng = stream(seed, 2);
    let r = worst((0..IDENTITY_DRAWS).map(|k| {
        let d = draw(&mut rng, k);
        frame_identity_residual(d.detuning, d.tls_detuning, d.rabi, d.coupling, d.t)
    }));
    CheckResult::new("frame_identity_analytic", r <= ANALYTIC_TOL, format!("max residual {r:.3e} (tol {ANALYTIC_TOL:e})"))
}

pub fn frame_identity_fd(seed: u64) -> CheckResult {
    let mut rng = stream(seed, 3);
    let r = worst((0..IDENTITY_DRAWS).map(|k| {
        let d = draw(&mut rng, k);
        frame_identity_residual_fd(d.detuning, d.tls_detuning, d.rabi, d.coupling, d.t, FD_STEP)
    }));
    CheckResult::new("frame_identity_fd", r <= FD_TOL, format!("max residual {r:.3e} (tol {FD_TOL:e})"))
}

pub fn dressed_identity(seed: u64, build: DressedBuilder) -> CheckResult {
    let mut rng = stream(seed, 4);
    let r = worst((0..IDENTITY_DRAWS).map(|k| {
        let d = draw(&mut rng, k);
        dressed_identity_residual_with(build, d.detuning, d.tls_detuning, d.rabi, d.coupling).unwrap_or(f64::NAN)
    }));
    CheckResult::new("dressed_identity", r <= ANALYTIC_TOL, format!("max residual {r:.3e} (tol {ANALYTIC_TOL:e})"))
}

pub fn rate_formula_consistency(seed: u64) -> CheckResult {
    let mut rng = stream(seed, 5);
    let r = worst((0..RATE_DRAWS).map(|_| {
        let m = ModelParams {
            detuning: 0.0,
            tls_detuning: rng.random_range(-20.0..20.0),
            rabi_frequency: rng.random_range(0.1..20.0),
            coupling: rng.random_range(0.01..5.0),
            relaxation: rng.random_range(0.0..2.0),
            tunneling: rng.random_range(0.1..3.0),
            ..ModelParams::default()
        };
        match (dark_rate(&m), dark_rate_resonant(&m)) {
            (Ok(g), Ok(r)) => ((g - r) / r).abs(),
            _ => f64::NAN,
        }
    }));
    CheckResult::new(
        "rate_formula_consistency",
        r <= ANALYTIC_TOL,
        format!("max relative difference {r:.3e} over {RATE_DRAWS} draws"),
    )
}

/// Central-to-side peak ratio of the analytic resonant spectrum.
pub fn analytic_peak_ratio(m: &ModelParams) -> f64 {
    let at = |dr: f64| dark_rate_resonant(&m.with_tls_detuning(dr)).unwrap_or(f64::NAN);
    at(0.0) / at(m.rabi_frequency)
}

pub fn spectrum_symmetry(_seed: u64) -> CheckResult {
    let m = ModelParams { detuning: 0.0, ..ModelParams::default() };
    let asym = worst((0..=300).map(|k| {
        let dr = k as f64 * 0.1;
        let a = dark_rate_resonant(&m.with_tls_detuning(dr)).unwrap_or(f64::NAN);
        let b = dark_rate_resonant(&m.with_tls_detuning(-dr)).unwrap_or(f64::NAN);
        (a - b).abs()
    }));
    let ratio = analytic_peak_ratio(&m);
    CheckResult::new(
        "spectrum_symmetry_and_ratio",
        asym == 0.0 && (1.9..=2.0).contains(&ratio),
        format!("max |Γ(Δr) − Γ(−Δr)| = {asym:e}, central/side = {ratio:.4}"),
    )
}

/// Largest deviation of the upper-level population from
/// `(Ω/R)² sin²(R t/2)` over a π pulse at `δt = 10⁻⁴`.
pub fn pi_pulse_error(detuning: f64, rabi: f64) -> Result<f64, String> {
    let dt = 1e-4;
    let m = ModelParams { relaxation: 0.0, tunneling: 0.0, ..ModelParams::default() };
    let s = Stepper::new(&qubit_rotating(detuning, rabi), &qubit_channels(&m), dt, Propagator::FirstOrder)
        .map_err(|e| e.to_string())?;
    let r = detuning.hypot(rabi);
    let steps = (std::f64::consts::PI / r / dt).round() as u64;
    let mut st = StateVector::basis_state(Basis::Qubit, "0");
    let mut rng = stream(0, 0);
    let mut err: f64 = 0.0;
    for k in 1..=steps {
        s.step(&mut st, &mut rng).map_err(|e| e.to_string())?;
        let t = k as f64 * dt;
        let exact = (rabi / r).powi(2) * (r * t / 2.0).sin().powi(2);
        err = err.max((st.population("1") - exact).abs());
    }
    Ok(err)
}

pub fn pi_pulse(config: &ExperimentConfig) -> CheckResult {
    let rabi = if config.rabi_frequency > 0.0 { config.rabi_frequency } else { 10.0 };
    let res = [0.0, config.detuning].iter().map(|d| pi_pulse_error(*d, rabi)).collect::<Result<Vec<_>, _>>();
    match res {
        Ok(e) => {
            let m = worst(e);
            CheckResult::new("pi_pulse", m <= 1e-3, format!("max population error {m:.3e} at dt 1e-4 (Ω = {rabi})"))
        }
        Err(e) => CheckResult::new("pi_pulse", false, e),
    }
}

pub fn norm_monotonicity(config: &ExperimentConfig) -> CheckResult {
    let mut rng = stream(config.master_seed, 6);
    let mut violations = 0usize;
    let mut steps = 0usize;
    for _ in 0..16 {
        let m = ModelParams {
            tls_detuning: rng.random_range(-15.0..15.0),
            coupling: rng.random_range(0.0..1.0),
            time_step: 0.01,
            ..config.model()
        };
        let Ok(s) = four_level_stepper(&m, Propagator::Exponential) else {
            return CheckResult::new("norm_monotonicity", false, "stepper rejected parameters".into());
        };
        let mut st = StateVector::basis_state(Basis::Bare, "0e");
        for _ in 0..2000 {
            match s.step(&mut st, &mut rng) {
                Ok(StepEvent::Evolved { norm_before }) => {
                    steps += 1;
                    violations += usize::from(norm_before > 1.0 + 1e-12);
                }
                Ok(StepEvent::Absorbed { .. }) => st = StateVector::basis_state(Basis::Bare, "0e"),
                Ok(StepEvent::Jumped { .. }) => {}
                Err(e) => return CheckResult::new("norm_monotonicity", false, e.to_string()),
            }
        }
    }
    CheckResult::new(
        "norm_monotonicity",
        violations == 0,
        format!("{violations} of {steps} no-jump steps increased the norm"),
    )
}

/// Number of subspace changes over one million steps with `Ω_c = 0`, from
/// each of `|0e⟩` and `|0g⟩`.
pub fn decoupling_transitions(m: &ModelParams) -> Result<(usize, u64), String> {
    let m = ModelParams { coupling: 0.0, time_step: 1e-3, ..*m };
    let s = four_level_stepper(&m, Propagator::FirstOrder).map_err(|e| e.to_string())?;
    let mut changes = 0usize;
    let mut steps = 0u64;
    for (k, start) in ["0e", "0g"].into_iter().enumerate() {
        let init = StateVector::basis_state(Basis::Bare, start);
        let bright = start == "0e";
        run_continuous_with(&s, &init, &init, 1000.0, &mut stream(m.time_step.to_bits(), k as u64), |smp| {
            let pb = smp.populations[2] + smp.populations[3];
            changes += usize::from((pb > 0.5) != bright);
            steps = steps.max(smp.step);
            ControlFlow::Continue(())
        })
        .map_err(|e| e.to_string())?;
    }
    Ok((changes, steps))
}

pub fn decoupling(config: &ExperimentConfig) -> CheckResult {
    match decoupling_transitions(&config.model()) {
        Ok((changes, steps)) => CheckResult::new(
            "decoupling",
            changes == 0 && steps >= 1_000_000,
            format!("{changes} subspace changes in {steps} steps per start state"),
        ),
        Err(e) => CheckResult::new("decoupling", false, e),
    }
}

/// Chi-square fit of 4000 telegraph dark widths to a shifted geometric law
/// with its maximum-likelihood mean.
pub fn geometric_widths(seed: u64) -> CheckResult {
    let m = ModelParams { tls_detuning: 0.0, time_step: 0.04, ..ModelParams::default() };
    let min = 3;
    let p = match simulate_dark_widths(
        &m,
        Propagator::Exponential,
        Default::default(),
        "0e",
        seed,
        4000,
        100_000_000,
        min,
    ) {
        Ok(p) => p,
        Err(e) => return CheckResult::new("geometric_width_fit", false, e.to_string()),
    };
    let widths: Vec<usize> = p.stats.samples.iter().map(|w| *w as usize).collect();
    let stats = DarkPeriodStats::new(DarkPeriodKind::Widths, p.stats.samples.clone(), min as f64);
    match geometric_fit(&widths, min, stats.memoryless_mean(), 1) {
        Ok(fit) => CheckResult::new(
            "geometric_width_fit",
            fit.passes(0.01),
            format!("chi2 = {:.2} on {} dof, p = {:.3}", fit.statistic, fit.dof, fit.p_value),
        ),
        Err(e) => CheckResult::new("geometric_width_fit", false, e.to_string()),
    }
}

pub fn determinism(config: &ExperimentConfig) -> CheckResult {
    let m = config.model();
    let result = (|| -> Result<bool, String> {
        let s = four_level_stepper(&m, config.propagator).map_err(|e| e.to_string())?;
        let csv = |seed: u64| -> Result<Vec<u8>, String> {
            let series = run_telegraph(&s, &m, &TelegraphConfig::new(200), seed).map_err(|e| e.to_string())?;
            let mut out = Vec::new();
            series.write_csv(&mut out).map_err(|e| e.to_string())?;
            Ok(out)
        };
        let same_bytes = csv(config.master_seed)? == csv(config.master_seed)?;
        let init = StateVector::basis_state(Basis::Bare, "0e");
        let ensemble = |threads: usize| -> Result<Vec<_>, String> {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
            pool.install(|| run_ensemble(64, config.master_seed, |i, rng| run_single(&s, &init, m.measurement_time, i, rng)))
                .into_iter()
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| e.to_string())
        };
        Ok(same_bytes && ensemble(1)? == ensemble(4)?)
    })();
    match result {
        Ok(ok) => CheckResult::new("determinism", ok, "telegraph bytes and 1- vs 4-worker ensembles compared".into()),
        Err(e) => CheckResult::new("determinism", false, e),
    }
}

pub fn lindblad_trace(config: &ExperimentConfig) -> CheckResult {
    let m = ModelParams { coupling: 2.0, time_step: 1e-3, ..config.model() };
    let result = DensityMatrix::pure(Basis::Bare.labels(), "0e")
        .map_err(|e| e.to_string())
        .and_then(|rho0| {
            evolve(&rho0, &four_level_rotating_from(&m), &four_level_channels(&m), m.time_step, &uniform_grid(1.0, 50))
                .map_err(|e| e.to_string())
        });
    match result {
        Ok(sol) => {
            let drift = worst(sol.states.iter().map(|r| (r.trace() - 1.0).abs()));
            let negative = sol.states.iter().map(|r| r.min_diagonal()).fold(0.0, f64::min);
            CheckResult::new(
                "lindblad_trace",
                drift <= 1e-6 && negative >= -1e-9,
                format!("max trace drift {drift:.2e}, min population {negative:.2e} over t ≤ 50"),
            )
        }
        Err(e) => CheckResult::new("lindblad_trace", false, e),
    }
}

/// Run every check with the given dressed-transform builder.
pub fn run_checks_with(config: &ExperimentConfig, build: DressedBuilder) -> Vec<CheckResult> {
    let seed = config.master_seed;
    vec![
        hermiticity(seed),
        frame_identity_analytic(seed),
        frame_identity_fd(seed),
        dressed_identity(seed, build),
        rate_formula_consistency(seed),
        spectrum_symmetry(seed),
        pi_pulse(config),
        norm_monotonicity(config),
        decoupling(config),
        geometric_widths(seed),
        determinism(config),
        lindblad_trace(config),
    ]
}

pub fn run_checks(config: &ExperimentConfig) -> Vec<CheckResult> {
    run_checks_with(config, dressed_transform)
}

//! Measurement protocols built on the single-step engine: bounded runs,
//! telegraph series of repeated runs, continuous trajectories and parallel
//! ensembles.

use std::ops::ControlFlow;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::engine::{from_svector, to_svector, AnyKernel, Kernel, StepEvent, Stepper, Vector};
use super::records::{ContinuousTrajectory, JumpEvent, RunOutcome, TelegraphSeries};
use super::rng::{stream, ChaCha8Rng};
use super::state::{StateVector, DARK_SUBSPACE};
use super::TrajectoryError;
use crate::hamiltonians::Basis;
use crate::model::ModelParams;

/// Number of whole steps covering `duration`.
pub fn steps_for(duration: f64, dt: f64) -> u64 {
    (duration / dt).round() as u64
}

fn run_kernel<const N: usize, R: Rng + ?Sized>(
    kernel: &Kernel<N>,
    psi: &mut Vector<N>,
    steps: u64,
    rng: &mut R,
) -> Result<Option<u64>, TrajectoryError> {
    for k in 0..steps {
        if let StepEvent::Absorbed { .. } = kernel.step(psi, rng)? {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

/// Evolve `initial` for up to `measurement_time`, stopping at the first
/// absorbing jump. Tunnel times are the start time of the step in which
/// the jump fired.
pub fn run_single<R: Rng + ?Sized>(
    stepper: &Stepper,
    initial: &StateVector,
    measurement_time: f64,
    run_index: usize,
    rng: &mut R,
) -> Result<RunOutcome, TrajectoryError> {
    if initial.basis() != stepper.basis() {
        return Err(TrajectoryError::InvalidInput("initial state basis differs from stepper basis".into()));
    }
    if !initial.is_normalized(1e-9) {
        return Err(TrajectoryError::InvalidInput("initial state must be normalized".into()));
    }
    let steps = steps_for(measurement_time, stepper.dt());
    let (fired, final_state) = match &stepper.kernel {
        AnyKernel::Two(k) => {
            let mut v = to_svector::<2>(initial);
            let f = run_kernel(k, &mut v, steps, rng)?;
            (f, from_svector(initial.basis(), &v))
        }
        AnyKernel::Four(k) => {
            let mut v = to_svector::<4>(initial);
            let f = run_kernel(k, &mut v, steps, rng)?;
            (f, from_svector(initial.basis(), &v))
        }
    };
    let initial_state = initial.as_basis_label();
    Ok(match fired {
        Some(k) => RunOutcome {
            run_index,
            initial_state,
            tunneled: true,
            tunnel_time: Some(k as f64 * stepper.dt()),
            final_state: None,
        },
        None => RunOutcome { run_index, initial_state, tunneled: false, tunnel_time: None, final_state: Some(final_state) },
    })
}

/// How the defect state is re-prepared after a run without tunneling.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum ResetPolicy {
    /// Draw `g` with probability `P_g = |⟨0g|ψ⟩|² + |⟨1g|ψ⟩|²`, else `e`.
    #[default]
    Sample,
    /// Start in `|0g⟩` when `P_g > p_threshold`, otherwise sample.
    Threshold { p_threshold: f64 },
}

impl ResetPolicy {
    pub const DEFAULT_THRESHOLD: f64 = 0.99;

    pub fn check(&self) -> Result<(), TrajectoryError> {
        match *self {
            ResetPolicy::Sample => Ok(()),
            ResetPolicy::Threshold { p_threshold } if (0.0..=1.0).contains(&p_threshold) => Ok(()),
            ResetPolicy::Threshold { p_threshold } => {
                Err(TrajectoryError::InvalidPolicy(format!("p_threshold must lie in [0, 1], got {p_threshold}")))
            }
        }
    }

    fn next_initial<R: Rng + ?Sized>(&self, p_g: f64, rng: &mut R) -> &'static str {
        if let ResetPolicy::Threshold { p_threshold } = *self {
            if p_g > p_threshold {
                return "0g";
            }
        }
        let r: f64 = rng.random();
        if r < p_g {
            "0g"
        } else {
            "0e"
        }
    }
}

/// Settings of a telegraph series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelegraphConfig {
    pub n_runs: usize,
    #[serde(default)]
    pub reset_policy: ResetPolicy,
    /// Label of the first run's initial state.
    #[serde(default = "default_first_state")]
    pub first_state: String,
}

fn default_first_state() -> String {
    "0e".into()
}

impl TelegraphConfig {
    pub fn new(n_runs: usize) -> Self {
        Self { n_runs, reset_policy: ResetPolicy::Sample, first_state: default_first_state() }
    }
}

/// Lazily generated telegraph runs. After a tunneling event the next run
/// starts in `|0e⟩`; otherwise the reset policy picks `|0g⟩` or `|0e⟩`
/// from the final conditional state.
pub struct TelegraphRuns<'a, R: Rng> {
    kernel: &'a Kernel<4>,
    steps: u64,
    dt: f64,
    policy: ResetPolicy,
    next: &'static str,
    index: usize,
    remaining: Option<usize>,
    rng: R,
}

impl<'a, R: Rng> TelegraphRuns<'a, R> {
    /// Runs generated so far.
    pub fn runs_done(&self) -> usize {
        self.index
    }

    fn run_once(&mut self) -> Result<RunOutcome, TrajectoryError> {
        let initial = StateVector::basis_state(Basis::Bare, self.next);
        let mut v = to_svector::<4>(&initial);
        let fired = run_kernel(self.kernel, &mut v, self.steps, &mut self.rng)?;
        let run_index = self.index;
        self.index += 1;
        let initial_state = Some(self.next);
        Ok(match fired {
            Some(k) => {
                self.next = "0e";
                RunOutcome {
                    run_index,
                    initial_state,
                    tunneled: true,
                    tunnel_time: Some(k as f64 * self.dt),
                    final_state: None,
                }
            }
            None => {
                let state = from_svector(Basis::Bare, &v);
                let p_g = state.subspace_population(&DARK_SUBSPACE);
                self.next = self.policy.next_initial(p_g, &mut self.rng);
                RunOutcome { run_index, initial_state, tunneled: false, tunnel_time: None, final_state: Some(state) }
            }
        })
    }
}

impl<R: Rng> Iterator for TelegraphRuns<'_, R> {
    type Item = Result<RunOutcome, TrajectoryError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.remaining {
            Some(0) => return None,
            Some(ref mut n) => *n -= 1,
            None => {}
        }
        Some(self.run_once())
    }
}

/// An unbounded (when `n_runs` is `None`) stream of telegraph runs over the
/// four-level system.
pub fn telegraph_runs<'a, R: Rng>(
    stepper: &'a Stepper,
    measurement_time: f64,
    policy: ResetPolicy,
    first_state: &str,
    n_runs: Option<usize>,
    rng: R,
) -> Result<TelegraphRuns<'a, R>, TrajectoryError> {
    policy.check()?;
    let AnyKernel::Four(kernel) = &stepper.kernel else {
        return Err(TrajectoryError::InvalidInput("telegraph series needs the four-level basis".into()));
    };
    let next = Basis::Bare
        .labels()
        .iter()
        .copied()
        .find(|l| *l == first_state)
        .ok_or_else(|| TrajectoryError::InvalidInput(format!("unknown first state {first_state:?}")))?;
    if !(measurement_time > 0.0) {
        return Err(TrajectoryError::InvalidInput("measurement time must be > 0".into()));
    }
    Ok(TelegraphRuns {
        kernel,
        steps: steps_for(measurement_time, stepper.dt()),
        dt: stepper.dt(),
        policy,
        next,
        index: 0,
        remaining: n_runs,
        rng,
    })
}

/// A full telegraph series drawn from stream 0 of `master_seed`.
pub fn run_telegraph(
    stepper: &Stepper,
    params: &ModelParams,
    config: &TelegraphConfig,
    master_seed: u64,
) -> Result<TelegraphSeries, TrajectoryError> {
    if config.n_runs == 0 {
        return Err(TrajectoryError::InvalidInput("n_runs must be >= 1".into()));
    }
    let runs = telegraph_runs(
        stepper,
        params.measurement_time,
        config.reset_policy,
        &config.first_state,
        Some(config.n_runs),
        stream(master_seed, 0),
    )?;
    let outcomes = runs.collect::<Result<Vec<_>, _>>()?;
    Ok(TelegraphSeries { outcomes, params: *params, master_seed })
}

/// Passed to continuous-trajectory observers after every step.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub step: u64,
    /// Time at the end of the step.
    pub time: f64,
    /// Normalized populations over the stepper basis.
    pub populations: &'a [f64],
    /// Channel that fired during the step, if any.
    pub jump: Option<&'static str>,
}

fn continuous_kernel<const N: usize, R, F>(
    stepper: &Stepper,
    kernel: &Kernel<N>,
    initial: &StateVector,
    reset: &StateVector,
    steps: u64,
    rng: &mut R,
    observe: &mut F,
) -> Result<(), TrajectoryError>
where
    R: Rng + ?Sized,
    F: FnMut(Sample<'_>) -> ControlFlow<()>,
{
    let dt = stepper.dt();
    let mut v = to_svector::<N>(initial);
    let reset = to_svector::<N>(reset);
    let mut pops = [0.0f64; 4];
    let fill = |v: &Vector<N>, pops: &mut [f64; 4]| {
        for (p, a) in pops.iter_mut().zip(v.iter()) {
            *p = a.norm_sqr();
        }
    };
    fill(&v, &mut pops);
    if observe(Sample { step: 0, time: 0.0, populations: &pops[..N], jump: None }).is_break() {
        return Ok(());
    }
    for k in 0..steps {
        let jump = match kernel.step(&mut v, rng)? {
            StepEvent::Evolved { .. } => None,
            StepEvent::Jumped { channel } => Some(stepper.channel_name(channel)),
            StepEvent::Absorbed { channel } => {
                v = reset;
                Some(stepper.channel_name(channel))
            }
        };
        fill(&v, &mut pops);
        let sample = Sample { step: k + 1, time: (k + 1) as f64 * dt, populations: &pops[..N], jump };
        if observe(sample).is_break() {
            break;
        }
    }
    Ok(())
}

/// Evolve one unbroken trajectory for `total_time`, re-preparing `reset`
/// at every absorbing jump, and hand each step to `observe`. Returning
/// `ControlFlow::Break` stops the trajectory early.
pub fn run_continuous_with<R, F>(
    stepper: &Stepper,
    initial: &StateVector,
    reset: &StateVector,
    total_time: f64,
    rng: &mut R,
    mut observe: F,
) -> Result<(), TrajectoryError>
where
    R: Rng + ?Sized,
    F: FnMut(Sample<'_>) -> ControlFlow<()>,
{
    if initial.basis() != stepper.basis() || reset.basis() != stepper.basis() {
        return Err(TrajectoryError::InvalidInput("state basis differs from stepper basis".into()));
    }
    let steps = steps_for(total_time, stepper.dt());
    match &stepper.kernel {
        AnyKernel::Two(k) => continuous_kernel(stepper, k, initial, reset, steps, rng, &mut observe),
        AnyKernel::Four(k) => continuous_kernel(stepper, k, initial, reset, steps, rng, &mut observe),
    }
}

/// Continuous four-level trajectory from `|0e⟩`, recorded every
/// `record_interval` (rounded to a whole number of steps).
pub fn run_continuous<R: Rng + ?Sized>(
    stepper: &Stepper,
    total_time: f64,
    record_interval: f64,
    rng: &mut R,
) -> Result<ContinuousTrajectory, TrajectoryError> {
    if stepper.basis() != Basis::Bare {
        return Err(TrajectoryError::InvalidInput("continuous trajectories need the four-level basis".into()));
    }
    let dt = stepper.dt();
    if !(record_interval >= dt) {
        return Err(TrajectoryError::InvalidInput(format!("record interval {record_interval} is below the time step {dt}")));
    }
    let every = steps_for(record_interval, dt).max(1);
    let i1e = Basis::Bare.idx("1e");
    let i0e = Basis::Bare.idx("0e");
    let mut out = ContinuousTrajectory {
        record_interval: every as f64 * dt,
        time_grid: Vec::new(),
        population_1e: Vec::new(),
        subspace_b_population: Vec::new(),
        jump_events: Vec::new(),
    };
    let start = StateVector::basis_state(Basis::Bare, "0e");
    run_continuous_with(stepper, &start, &start, total_time, rng, |s| {
        if let Some(channel) = s.jump {
            out.jump_events.push(JumpEvent { time: s.time - dt, channel });
        }
        if s.step % every == 0 {
            out.time_grid.push(s.time);
            out.population_1e.push(s.populations[i1e]);
            out.subspace_b_population.push(s.populations[i0e] + s.populations[i1e]);
        }
        ControlFlow::Continue(())
    })?;
    Ok(out)
}

/// Run `n` independent trajectories in parallel. Trajectory `i` receives
/// stream `i` of `master_seed`; results come back in index order, so any
/// fold over them is independent of the worker count.
pub fn run_ensemble<T, F>(n: usize, master_seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> T + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(master_seed, i as u64);
            f(i, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::four_level_rotating_from;
    use crate::trajectory::{four_level_channels, Propagator};

    fn stepper(p: &ModelParams) -> Stepper {
        Stepper::new(&four_level_rotating_from(p), &four_level_channels(p), p.time_step, Propagator::FirstOrder).unwrap()
    }

    #[test]
    fn frozen_dynamics_never_tunnel() {
        let p = ModelParams { rabi_frequency: 0.0, ..ModelParams::default() };
        let s = stepper(&p);
        let init = StateVector::basis_state(Basis::Bare, "0g");
        let out = run_single(&s, &init, p.measurement_time, 0, &mut stream(1, 0)).unwrap();
        assert!(!out.tunneled);
        assert_eq!(out.final_state.unwrap().as_basis_label(), Some("0g"));
    }

    #[test]
    fn decoupled_telegraph_has_no_dark_starts() {
        let p = ModelParams { coupling: 0.0, ..ModelParams::default() };
        let s = stepper(&p);
        let series = run_telegraph(&s, &p, &TelegraphConfig::new(300), 11).unwrap();
        assert!(series.outcomes.iter().all(|o| o.initial_state == Some("0e")));
    }

    #[test]
    fn reset_after_tunneling_is_bright() {
        let p = ModelParams::default();
        let s = stepper(&p);
        let series = run_telegraph(&s, &p, &TelegraphConfig::new(400), 3).unwrap();
        for w in series.outcomes.windows(2) {
            assert_eq!(w[1].run_index, w[0].run_index + 1);
            if w[0].tunneled {
                assert_eq!(w[1].initial_state, Some("0e"));
            }
        }
        assert_eq!(series.outcomes[0].initial_state, Some("0e"));
    }

    #[test]
    fn threshold_policy_validated() {
        assert!(ResetPolicy::Threshold { p_threshold: 1.5 }.check().is_err());
        assert!(ResetPolicy::Threshold { p_threshold: 0.99 }.check().is_ok());
    }

    #[test]
    fn ensemble_of_one_is_stream_zero() {
        let p = ModelParams::default();
        let s = stepper(&p);
        let init = StateVector::basis_state(Basis::Bare, "0e");
        let a = run_ensemble(1, 42, |i, rng| run_single(&s, &init, p.measurement_time, i, rng).unwrap());
        let b = run_single(&s, &init, p.measurement_time, 0, &mut stream(42, 0)).unwrap();
        assert_eq!(a[0], b);
    }

    #[test]
    fn continuous_decoupled_stays_bright() {
        let p = ModelParams { coupling: 0.0, ..ModelParams::default() };
        let s = stepper(&p);
        let traj = run_continuous(&s, 50.0, 0.1, &mut stream(9, 0)).unwrap();
        assert!(traj.subspace_b_population.iter().all(|b| (b - 1.0).abs() < 1e-12));
        assert!(traj.jump_events.windows(2).all(|w| w[0].time < w[1].time));
        assert_eq!(traj.time_grid.len(), 501);
    }
}

//! The named experiments. Each is a pure function of its configuration
//! (including the master seed) and returns its data files in memory; the
//! collector in [`execute`] writes them.

use std::ops::ControlFlow;
use std::path::PathBuf;
use std::time::Instant;

use qjumps::analytics::{
    chi_square, dark_rate, expected_dark_width, extract_dark_lifetimes_continuous, extract_dark_periods_telegraph,
    local_maxima, ChiSquareTest, DarkPeriodKind, DarkPeriodStats, DarkRunFilter, DarkSegmenter,
};
use qjumps::hamiltonians::{four_level_rotating_from, qubit_rotating, Basis};
use qjumps::lindblad::{evolve, uniform_grid, DensityMatrix, LindbladSolution};
use qjumps::model::ModelParams;
use qjumps::trajectory::rng::{derive_seed, stream};
use qjumps::trajectory::{
    four_level_channels, qubit_channels, run_continuous, run_continuous_with, run_ensemble, run_single, run_telegraph,
    telegraph_runs, Propagator, ResetPolicy, RunOutcome, StateVector, Stepper, TelegraphConfig,
};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{Experiment, ExperimentConfig};
use crate::output::{table, with_header, write_all, DataFile};
use crate::CliError;

/// Data files and a JSON summary of one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub files: Vec<DataFile>,
    pub summary: serde_json::Value,
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

fn finite(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        serde_json::Value::Null
    }
}

pub fn four_level_stepper(m: &ModelParams, propagator: Propagator) -> Result<Stepper, CliError> {
    Ok(Stepper::new(&four_level_rotating_from(m), &four_level_channels(m), m.time_step, propagator)?)
}

/// Tunnel-time histogram of a two-level Rabi ensemble with the
/// master-equation prediction.
#[derive(Debug, Clone)]
pub struct RabiReport {
    pub outcomes: Vec<RunOutcome>,
    pub bin_width: f64,
    /// Counts per bin over `[0, τ_m)`, then the runs without tunneling.
    pub observed: Vec<f64>,
    /// `N ΔP_OUT` per bin, then `N (1 − P_OUT(τ_m))`.
    pub expected: Vec<f64>,
    pub solution: LindbladSolution,
    pub chi_square: Option<ChiSquareTest>,
}

/// Resolution of the master-equation record relative to the histogram.
const SUBDIVISIONS: usize = 10;

pub fn rabi(config: &ExperimentConfig) -> Result<RabiReport, CliError> {
    let m = config.model();
    let h = qubit_rotating(m.detuning, m.rabi_frequency);
    let channels = qubit_channels(&m);
    let stepper = Stepper::new(&h, &channels, m.time_step, config.propagator)?;
    let init = StateVector::basis_state(Basis::Qubit, "0");
    let n = config.n_trajectories;
    let outcomes = run_ensemble(n, config.master_seed, |i, rng| run_single(&stepper, &init, m.measurement_time, i, rng))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let bins = config.histogram_bins;
    let width = m.measurement_time / bins as f64;
    let mut observed = vec![0.0; bins + 1];
    for o in &outcomes {
        match o.tunnel_time {
            // the jump happened within the step starting at `t`
            Some(t) => observed[(((t + 0.5 * m.time_step) / width) as usize).min(bins - 1)] += 1.0,
            None => observed[bins] += 1.0,
        }
    }

    let rho0 = DensityMatrix::pure(Basis::Qubit.labels(), "0")?;
    let grid = uniform_grid(width / SUBDIVISIONS as f64, bins * SUBDIVISIONS);
    let solution = evolve(&rho0, &h, &channels, m.time_step, &grid)?;
    let p_out = solution.p_out();
    let edges: Vec<f64> = (0..=bins).map(|k| p_out[k * SUBDIVISIONS]).collect();
    let mut expected: Vec<f64> = edges.windows(2).map(|w| n as f64 * (w[1] - w[0])).collect();
    expected.push(n as f64 * (1.0 - edges[bins]));
    let chi = chi_square(&observed, &expected, 0).ok();
    Ok(RabiReport { outcomes, bin_width: width, observed, expected, solution, chi_square: chi })
}

fn rabi_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    let r = rabi(config)?;
    let times = table(
        &["run_index", "tunneled", "tunnel_time"],
        r.outcomes.iter().map(|o| {
            vec![o.run_index.to_string(), u8::from(o.tunneled).to_string(), o.tunnel_time.map(num).unwrap_or_default()]
        }),
    );
    let bins = config.histogram_bins;
    let hist = table(
        &["bin_start", "bin_end", "observed", "expected"],
        (0..=bins).map(|k| {
            let (a, b) = if k < bins {
                (num(k as f64 * r.bin_width), num((k + 1) as f64 * r.bin_width))
            } else {
                (num(config.measurement_time), "inf".into())
            };
            vec![a, b, num(r.observed[k]), num(r.expected[k])]
        }),
    );
    let mut me = Vec::new();
    r.solution.write_csv(&mut me)?;
    let summary = json!({
        "n_trajectories": r.outcomes.len(),
        "n_tunneled": r.outcomes.iter().filter(|o| o.tunneled).count(),
        "chi_square": r.chi_square,
        "passes_1pct": r.chi_square.as_ref().map(|c| c.passes(0.01)),
    });
    Ok(ExperimentOutput {
        files: vec![
            DataFile { name: "tunnel_times.csv".into(), bytes: with_header(config, &times) },
            DataFile { name: "histogram.csv".into(), bytes: with_header(config, &hist) },
            DataFile { name: "master_equation.csv".into(), bytes: with_header(config, &me) },
        ],
        summary,
    })
}

fn telegraph_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    let m = config.model();
    let stepper = four_level_stepper(&m, config.propagator)?;
    let tc = TelegraphConfig { n_runs: config.n_runs, reset_policy: config.reset(), first_state: config.first_state.clone() };
    let series = run_telegraph(&stepper, &m, &tc, config.master_seed)?;
    let stats = extract_dark_periods_telegraph(&series, config.min_dark_runs);
    let mut runs = Vec::new();
    series.write_csv(&mut runs)?;
    let widths = table(&["width"], stats.samples.iter().map(|w| vec![num(*w)]));
    let analytic = dark_rate(&m)?;
    let summary = json!({
        "n_runs": series.outcomes.len(),
        "n_tunneled": series.summary().n_tunneled,
        "min_dark_runs": config.min_dark_runs,
        "n_dark": stats.count,
        "width_raw_mean": finite(stats.mean),
        "width_memoryless": finite(stats.memoryless_mean()),
        "stderr": finite(stats.std_err),
        "width_analytic": finite(expected_dark_width(analytic, m.measurement_time)),
    });
    Ok(ExperimentOutput {
        files: vec![
            DataFile { name: "telegraph.csv".into(), bytes: with_header(config, &runs) },
            DataFile { name: "dark_widths.csv".into(), bytes: with_header(config, &widths) },
        ],
        summary,
    })
}

fn continuous_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    let m = config.model();
    let stepper = four_level_stepper(&m, config.propagator)?;
    let traj = run_continuous(&stepper, config.total_time, config.record_interval, &mut stream(config.master_seed, 0))?;
    let stats =
        extract_dark_lifetimes_continuous(&traj, config.enter_threshold, config.exit_threshold, config.min_dwell)?;
    let mut pops = Vec::new();
    traj.write_csv(&mut pops)?;
    let mut events = Vec::new();
    traj.write_events_csv(&mut events)?;
    let (rate, rate_err) = stats.rate();
    let summary = json!({
        "n_samples": traj.time_grid.len(),
        "n_tunnel": traj.count_events("tunnel"),
        "n_relax_e": traj.count_events("relax_e"),
        "n_relax_g": traj.count_events("relax_g"),
        "n_dark": stats.count,
        "lifetime_mean": finite(stats.mean),
        "rate_sim": finite(rate),
        "stderr": finite(rate_err),
        "rate_analytic": dark_rate(&m)?,
    });
    Ok(ExperimentOutput {
        files: vec![
            DataFile { name: "continuous.csv".into(), bytes: with_header(config, &pops) },
            DataFile { name: "events.csv".into(), bytes: with_header(config, &events) },
        ],
        summary,
    })
}

/// Dark lifetimes collected from one continuous trajectory.
#[derive(Debug, Clone)]
pub struct DarkRatePoint {
    pub stats: DarkPeriodStats,
    pub simulated_time: f64,
}

/// Follow one trajectory from `|0e⟩` until `n_dark` dark lifetimes have
/// been segmented or `max_time` has elapsed.
pub fn simulate_dark_rate(
    m: &ModelParams,
    propagator: Propagator,
    seed: u64,
    n_dark: usize,
    max_time: f64,
    segmenter: DarkSegmenter,
    min_dwell: f64,
) -> Result<DarkRatePoint, CliError> {
    let stepper = four_level_stepper(m, propagator)?;
    let start = StateVector::basis_state(Basis::Bare, "0e");
    let (i0g, i1g) = (Basis::Bare.idx("0g"), Basis::Bare.idx("1g"));
    let mut seg = segmenter;
    let mut lifetimes = Vec::with_capacity(n_dark);
    let mut last = 0.0;
    run_continuous_with(&stepper, &start, &start, max_time, &mut stream(seed, 0), |s| {
        last = s.time;
        if let Some(life) = seg.push(s.time, s.populations[i0g] + s.populations[i1g]) {
            lifetimes.push(life);
            if lifetimes.len() >= n_dark {
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    })?;
    Ok(DarkRatePoint { stats: DarkPeriodStats::new(DarkPeriodKind::Lifetimes, lifetimes, min_dwell), simulated_time: last })
}

/// Dark widths collected from one telegraph series.
#[derive(Debug, Clone)]
pub struct DarkWidthPoint {
    pub stats: DarkPeriodStats,
    pub n_runs: usize,
}

/// Run the telegraph protocol until `n_dark` dark periods of at least
/// `min_dark_runs` runs have closed or `max_runs` runs are done.
#[allow(clippy::too_many_arguments)]
pub fn simulate_dark_widths(
    m: &ModelParams,
    propagator: Propagator,
    policy: ResetPolicy,
    first_state: &str,
    seed: u64,
    n_dark: usize,
    max_runs: usize,
    min_dark_runs: usize,
) -> Result<DarkWidthPoint, CliError> {
    let stepper = four_level_stepper(m, propagator)?;
    let mut filter = DarkRunFilter::new(min_dark_runs);
    let mut widths = Vec::with_capacity(n_dark);
    let mut runs = telegraph_runs(&stepper, m.measurement_time, policy, first_state, Some(max_runs), stream(seed, 0))?;
    for run in runs.by_ref() {
        if let Some(w) = filter.push(run?.tunneled) {
            widths.push(w as f64);
            if widths.len() >= n_dark {
                break;
            }
        }
    }
    Ok(DarkWidthPoint {
        stats: DarkPeriodStats::new(DarkPeriodKind::Widths, widths, min_dark_runs.max(1) as f64),
        n_runs: runs.runs_done(),
    })
}

fn segmenter(config: &ExperimentConfig) -> Result<DarkSegmenter, CliError> {
    Ok(DarkSegmenter::new(config.enter_threshold, config.exit_threshold, config.min_dwell)?)
}

fn sweep_values(config: &ExperimentConfig) -> Result<(Vec<f64>, Vec<ModelParams>), CliError> {
    let models = config.sweep_models().map_err(|e| CliError::Validation(vec![e]))?;
    Ok((config.sweep_grid(), models))
}

fn darkrate_sweep(config: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    let (grid, models) = sweep_values(config)?;
    let seg = segmenter(config)?;
    let points = models
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            let p = simulate_dark_rate(
                m,
                config.propagator,
                derive_seed(config.master_seed, i as u64),
                config.n_dark_periods,
                config.max_time,
                seg.clone(),
                config.min_dwell,
            )?;
            Ok((dark_rate(m)?, p))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let param = config.sweep_parameter.as_str();
    let body = table(
        &[param, "rate_analytic", "rate_sim", "stderr", "n_dark", "simulated_time"],
        grid.iter().zip(&points).map(|(x, (a, p))| {
            let (r, e) = p.stats.rate();
            vec![num(*x), num(*a), num(r), num(e), p.stats.count.to_string(), num(p.simulated_time)]
        }),
    );
    let analytic: Vec<f64> = points.iter().map(|(a, _)| *a).collect();
    let simulated: Vec<f64> = points.iter().map(|(_, p)| p.stats.rate().0).collect();
    let at = |idx: Vec<usize>| idx.into_iter().map(|k| grid[k]).collect::<Vec<_>>();
    let summary = json!({
        "sweep_parameter": param,
        "points": grid.len(),
        "analytic_maxima": at(local_maxima(&analytic)),
        "simulated_maxima": at(local_maxima(&simulated)),
        "min_dark_periods": points.iter().map(|(_, p)| p.stats.count).min(),
    });
    Ok(ExperimentOutput {
        files: vec![DataFile { name: "darkrate_sweep.csv".into(), bytes: with_header(config, &body) }],
        summary,
    })
}

fn width_sweep(config: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    let (grid, models) = sweep_values(config)?;
    let points = models
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            let p = simulate_dark_widths(
                m,
                config.propagator,
                config.reset(),
                &config.first_state,
                derive_seed(config.master_seed, i as u64),
                config.n_dark_periods,
                config.max_runs,
                config.min_dark_runs,
            )?;
            Ok((expected_dark_width(dark_rate(m)?, m.measurement_time), p))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let param = config.sweep_parameter.as_str();
    let body = table(
        &[param, "width_analytic", "width_sim", "stderr", "width_raw", "n_dark", "n_runs"],
        grid.iter().zip(&points).map(|(x, (a, p))| {
            vec![
                num(*x),
                num(*a),
                num(p.stats.memoryless_mean()),
                num(p.stats.std_err),
                num(p.stats.mean),
                p.stats.count.to_string(),
                p.n_runs.to_string(),
            ]
        }),
    );
    let argmin = |v: Vec<f64>| {
        v.iter().enumerate().filter(|(_, x)| x.is_finite()).min_by(|a, b| a.1.total_cmp(b.1)).map(|(k, x)| (grid[k], *x))
    };
    let summary = json!({
        "sweep_parameter": param,
        "points": grid.len(),
        "min_dark_runs": config.min_dark_runs,
        "analytic_minimum": argmin(points.iter().map(|(a, _)| *a).collect()),
        "simulated_minimum": argmin(points.iter().map(|(_, p)| p.stats.memoryless_mean()).collect()),
    });
    Ok(ExperimentOutput {
        files: vec![DataFile { name: "width_sweep.csv".into(), bytes: with_header(config, &body) }],
        summary,
    })
}

/// Run the configured experiment without touching the file system.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    let violations = config.violations();
    if !violations.is_empty() {
        return Err(CliError::Validation(violations));
    }
    match config.experiment {
        Experiment::Rabi => rabi_experiment(config),
        Experiment::Telegraph => telegraph_experiment(config),
        Experiment::Continuous => continuous_experiment(config),
        Experiment::DarkrateSweep => darkrate_sweep(config),
        Experiment::WidthSweep => width_sweep(config),
    }
}

/// Validate, run and write the data files plus manifest.
pub fn execute(config: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut violations = config.violations();
    if let Err(e) = config.check_out_dir() {
        violations.push(e);
    }
    if !violations.is_empty() {
        return Err(CliError::Validation(violations));
    }
    let start = Instant::now();
    let out = run_experiment(config)?;
    write_all(config, &out.files, &out.summary, start.elapsed())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rabi_histogram_accounts_for_every_run() {
        let c = ExperimentConfig { n_trajectories: 200, time_step: 1e-3, ..ExperimentConfig::default() };
        let r = rabi(&c).unwrap();
        assert_eq!(r.observed.len(), 51);
        assert_eq!(r.observed.iter().sum::<f64>(), 200.0);
        assert!((r.expected.iter().sum::<f64>() - 200.0).abs() < 1e-6);
    }

    #[test]
    fn decoupled_defect_has_no_dark_periods() {
        let m = ModelParams { coupling: 0.0, time_step: 0.02, ..ModelParams::default() };
        let seg = DarkSegmenter::new(0.9, 0.5, 1.0).unwrap();
        let p = simulate_dark_rate(&m, Propagator::Exponential, 1, 10, 200.0, seg, 1.0).unwrap();
        assert_eq!(p.stats.count, 0);
        assert!((p.simulated_time - 200.0).abs() < 1e-9);
    }

    #[test]
    fn width_point_stops_at_requested_count() {
        let m = ModelParams { tls_detuning: 0.0, time_step: 0.04, ..ModelParams::default() };
        let p = simulate_dark_widths(&m, Propagator::Exponential, ResetPolicy::Sample, "0e", 3, 20, 1_000_000, 3).unwrap();
        assert_eq!(p.stats.count, 20);
        assert!(p.stats.samples.iter().all(|w| *w >= 3.0));
    }

    #[test]
    fn invalid_config_lists_violations() {
        let c = ExperimentConfig { time_step: 1.0, n_runs: 0, ..ExperimentConfig::default() };
        match run_experiment(&c) {
            Err(CliError::Validation(v)) => assert!(v.len() >= 2, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }
}

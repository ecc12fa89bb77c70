use std::ops::ControlFlow;

use proptest::prelude::*;
use qjumps::analytics::{dark_widths, geometric_fit, mean_and_std_err, DarkRunFilter, DarkSegmenter};
use qjumps::hamiltonians::{four_level_rotating_from, qubit_rotating, Basis};
use qjumps::model::ModelParams;
use qjumps::trajectory::rng::stream;
use qjumps::trajectory::{
    four_level_channels, qubit_channels, run_continuous_with, run_ensemble, run_single, run_telegraph, telegraph_runs,
    Propagator, ResetPolicy, StateVector, StepEvent, Stepper, TelegraphConfig,
};

fn four_level(p: &ModelParams, prop: Propagator) -> Stepper {
    Stepper::new(&four_level_rotating_from(p), &four_level_channels(p), p.time_step, prop).unwrap()
}

fn csv(p: &ModelParams, seed: u64) -> Vec<u8> {
    let s = four_level(p, Propagator::FirstOrder);
    let series = run_telegraph(&s, p, &TelegraphConfig::new(200), seed).unwrap();
    let mut out = Vec::new();
    series.write_csv(&mut out).unwrap();
    out
}

#[test]
fn telegraph_series_is_deterministic() {
    let p = ModelParams::default();
    assert_eq!(csv(&p, 5), csv(&p, 5));
    assert_ne!(csv(&p, 5), csv(&p, 6));
}

#[test]
fn ensemble_independent_of_worker_count() {
    let p = ModelParams::default();
    let s = four_level(&p, Propagator::FirstOrder);
    let init = StateVector::basis_state(Basis::Bare, "0e");
    let go = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            run_ensemble(64, 77, |i, rng| run_single(&s, &init, p.measurement_time, i, rng).unwrap())
        })
    };
    assert_eq!(go(1), go(4));
}

#[test]
fn renormalized_state_has_unit_norm() {
    let p = ModelParams::default();
    let s = four_level(&p, Propagator::FirstOrder);
    let mut st = StateVector::basis_state(Basis::Bare, "0e");
    let mut rng = stream(3, 0);
    for _ in 0..20_000 {
        match s.step(&mut st, &mut rng).unwrap() {
            StepEvent::Absorbed { .. } => st = StateVector::basis_state(Basis::Bare, "0e"),
            _ => assert!(st.is_normalized(1e-12)),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Between jumps the unnormalized norm never grows when decay is on,
    /// and stays at one when every rate vanishes.
    #[test]
    fn no_jump_norm_monotone(dr in -15.0f64..15.0, om in 0.0f64..20.0, oc in 0.0f64..1.0, g10 in 0.0f64..1.0, decay in any::<bool>()) {
        let tunneling = if decay { 1.0 } else { 0.0 };
        let relaxation = if decay { g10 } else { 0.0 };
        let p = ModelParams { tls_detuning: dr, rabi_frequency: om, coupling: oc, relaxation, tunneling, time_step: 0.01, ..ModelParams::default() };
        let s = four_level(&p, Propagator::Exponential);
        let mut st = StateVector::basis_state(Basis::Bare, "0e");
        let mut rng = stream(1, 0);
        let mut norm = 1.0f64;
        for _ in 0..2000 {
            match s.step(&mut st, &mut rng).unwrap() {
                StepEvent::Evolved { norm_before } => {
                    let next = norm * norm_before;
                    if decay {
                        prop_assert!(next <= norm * (1.0 + 1e-12));
                    } else {
                        prop_assert!((norm_before - 1.0).abs() <= 1e-12);
                    }
                    norm = next;
                }
                _ => norm = 1.0,
            }
        }
    }
}

#[test]
fn decoupled_subspaces_never_mix() {
    let p = ModelParams { coupling: 0.0, time_step: 1e-3, ..ModelParams::default() };
    let s = four_level(&p, Propagator::FirstOrder);
    for start in ["0e", "0g"] {
        let init = StateVector::basis_state(Basis::Bare, start);
        let bright = start == "0e";
        let mut changes = 0usize;
        let mut steps = 0u64;
        run_continuous_with(&s, &init, &init, 1000.0, &mut stream(8, 0), |smp| {
            let pb = smp.populations[2] + smp.populations[3];
            if (pb > 0.5) != bright {
                changes += 1;
            }
            steps = smp.step;
            ControlFlow::Continue(())
        })
        .unwrap();
        assert_eq!(steps, 1_000_000);
        assert_eq!(changes, 0, "start {start}");
    }
}

fn mean_tunnel_time(p: &ModelParams, prop: Propagator, n: usize, seed: u64) -> (f64, f64) {
    let s = four_level(p, prop);
    let init = StateVector::basis_state(Basis::Bare, "0e");
    let times: Vec<f64> = run_ensemble(n, seed, |i, rng| run_single(&s, &init, 50.0, i, rng).unwrap())
        .into_iter()
        .filter_map(|o| o.tunnel_time)
        .collect();
    mean_and_std_err(&times)
}

#[test]
fn tunnel_time_decreases_with_tunneling_rate() {
    let means: Vec<f64> = [0.5, 1.0, 2.0]
        .iter()
        .map(|g| {
            let p = ModelParams { tunneling: *g, coupling: 0.0, ..ModelParams::default() };
            mean_tunnel_time(&p, Propagator::FirstOrder, 2000, 9).0
        })
        .collect();
    assert!(means[0] > means[1] && means[1] > means[2], "{means:?}");
}

#[test]
fn steppers_agree_on_tunnel_times() {
    let p = ModelParams { coupling: 0.0, time_step: 1e-3, ..ModelParams::default() };
    let (a, ea) = mean_tunnel_time(&p, Propagator::FirstOrder, 4000, 10);
    let (b, eb) = mean_tunnel_time(&p, Propagator::Exponential, 4000, 11);
    assert!((a - b).abs() < 4.0 * (ea * ea + eb * eb).sqrt(), "{a} ± {ea} vs {b} ± {eb}");
}

#[test]
fn threshold_policy_resets_follow_tunneling() {
    let p = ModelParams::default();
    let s = four_level(&p, Propagator::FirstOrder);
    let cfg = TelegraphConfig { n_runs: 300, reset_policy: ResetPolicy::Threshold { p_threshold: 0.99 }, first_state: "0g".into() };
    let series = run_telegraph(&s, &p, &cfg, 4).unwrap();
    assert_eq!(series.outcomes[0].initial_state, Some("0g"));
    for w in series.outcomes.windows(2) {
        if w[0].tunneled {
            assert_eq!(w[1].initial_state, Some("0e"));
        }
    }
}

fn widths(p: &ModelParams, n_widths: usize, min: usize, seed: u64) -> Vec<usize> {
    let s = four_level(p, Propagator::Exponential);
    let mut filter = DarkRunFilter::new(min);
    let mut out = Vec::with_capacity(n_widths);
    for run in telegraph_runs(&s, p.measurement_time, ResetPolicy::Sample, "0e", None, stream(seed, 0)).unwrap() {
        if let Some(w) = filter.push(run.unwrap().tunneled) {
            out.push(w);
            if out.len() == n_widths {
                break;
            }
        }
    }
    out
}

#[test]
fn closer_defect_gives_shorter_dark_periods() {
    let base = ModelParams { tls_detuning: 0.0, time_step: 0.04, ..ModelParams::default() };
    let near = widths(&base.with_tls_detuning(2.0), 300, 3, 1);
    let far = widths(&base.with_tls_detuning(5.0), 300, 3, 2);
    let m = |v: &[usize]| v.iter().sum::<usize>() as f64 / v.len() as f64;
    assert!(m(&near) < m(&far), "{} vs {}", m(&near), m(&far));
}

/// Dark widths past the filter threshold follow a shifted geometric law.
#[test]
fn dark_widths_are_geometric() {
    let p = ModelParams { tls_detuning: 0.0, time_step: 0.04, ..ModelParams::default() };
    let w = widths(&p, 4000, 3, 12);
    let mean = w.iter().map(|x| (x - 2) as f64).sum::<f64>() / w.len() as f64;
    let fit = geometric_fit(&w, 3, mean, 1).unwrap();
    assert!(fit.passes(0.01), "{fit:?}");
}

/// The standard error of the mean dark width scales as 1/√n: four times
/// the sample halves it.
#[test]
fn standard_error_scaling() {
    let p = ModelParams { tls_detuning: 0.0, time_step: 0.04, ..ModelParams::default() };
    let se = |n: usize, rep: u64| {
        let w: Vec<f64> = widths(&p, n, 1, 1000 + rep).into_iter().map(|x| x as f64).collect();
        mean_and_std_err(&w).1
    };
    let small: f64 = (0..10).map(|r| se(100, r)).sum::<f64>() / 10.0;
    let large: f64 = (0..10).map(|r| se(400, 100 + r)).sum::<f64>() / 10.0;
    let ratio = small / large;
    assert!((ratio - 2.0).abs() <= 0.3 * 2.0, "{ratio}");
}

#[test]
fn dark_fraction_matches_rate_balance() {
    let p = ModelParams { tls_detuning: 0.0, time_step: 0.02, ..ModelParams::default() };
    let s = four_level(&p, Propagator::Exponential);
    let init = StateVector::basis_state(Basis::Bare, "0e");
    let mut seg = DarkSegmenter::new(0.9, 0.5, 1.0).unwrap();
    let mut dark = Vec::new();
    let mut bright = Vec::new();
    let mut last_exit: Option<f64> = None;
    let mut was_dark = false;
    let mut dark_samples = 0u64;
    let mut samples = 0u64;
    run_continuous_with(&s, &init, &init, 100_000.0, &mut stream(21, 0), |smp| {
        let pa = smp.populations[0] + smp.populations[1];
        if let Some(life) = seg.push(smp.time, pa) {
            if let Some(t0) = last_exit {
                bright.push(smp.time - life - t0);
            }
            dark.push(life);
        }
        if was_dark && !seg.is_dark() {
            last_exit = Some(smp.time);
        }
        was_dark = seg.is_dark();
        if last_exit.is_some() {
            samples += 1;
            dark_samples += u64::from(seg.is_dark());
        }
        ControlFlow::Continue(())
    })
    .unwrap();
    let rate_d = 1.0 / mean_and_std_err(&dark).0;
    let rate_ba = 1.0 / mean_and_std_err(&bright).0;
    let predicted = rate_ba / (rate_d + rate_ba);
    let observed = dark_samples as f64 / samples as f64;
    assert!(dark.len() > 500);
    assert!((observed - predicted).abs() < 0.1 * predicted, "{observed} vs {predicted}");
}

#[test]
fn qubit_from_ground_state() {
    let p = ModelParams::default();
    let s = Stepper::new(&qubit_rotating(0.0, 10.0), &qubit_channels(&p), 1e-3, Propagator::FirstOrder).unwrap();
    let init = StateVector::basis_state(Basis::Qubit, "0");
    let runs = run_ensemble(500, 1, |i, rng| run_single(&s, &init, 10.0, i, rng).unwrap());
    assert!(runs.iter().filter(|o| o.tunneled).count() > 450);
    assert!(runs.iter().all(|o| o.tunnel_time.is_none_or(|t| (0.0..=10.0).contains(&t))));
    assert_eq!(dark_widths(&[true, false, true], 1), vec![1]);
}

use std::ops::ControlFlow;

use qjumps::hamiltonians::{four_level_rotating_from, qubit_rotating, Basis, HamiltonianMatrix};
use qjumps::lindblad::{evolve, uniform_grid, DensityMatrix, OUT};
use qjumps::model::ModelParams;
use qjumps::trajectory::{
    four_level_channels, qubit_channels, run_continuous_with, run_ensemble, JumpChannel, Propagator, StateVector,
    Stepper,
};

const CHECKPOINTS: usize = 20;

/// Per-trajectory populations at the checkpoints, zero after tunneling,
/// plus an indicator of having tunneled (the `OUT` population).
fn sampled(stepper: &Stepper, start: &str, every: u64, rng: &mut qjumps::trajectory::rng::ChaCha8Rng) -> Vec<Vec<f64>> {
    let dim = stepper.basis().dim();
    let init = StateVector::basis_state(stepper.basis(), start);
    let mut rows = vec![vec![0.0; dim + 1]; CHECKPOINTS + 1];
    let mut filled = 0;
    let t_end = (CHECKPOINTS as u64 * every) as f64 * stepper.dt();
    run_continuous_with(stepper, &init, &init, t_end, rng, |s| {
        if s.jump == Some("tunnel") {
            return ControlFlow::Break(());
        }
        if s.step % every == 0 {
            rows[filled][..dim].copy_from_slice(s.populations);
            filled += 1;
        }
        ControlFlow::Continue(())
    })
    .unwrap();
    for row in rows.iter_mut().skip(filled) {
        row[dim] = 1.0;
    }
    rows
}

fn compare(h: &HamiltonianMatrix, channels: &[JumpChannel], p: &ModelParams, start: &str, n: usize, seed: u64) {
    let stepper = Stepper::new(h, channels, p.time_step, Propagator::FirstOrder).unwrap();
    let every = 250u64;
    let runs = run_ensemble(n, seed, |_, rng| sampled(&stepper, start, every, rng));
    let labels = h.basis().labels();
    let rho0 = DensityMatrix::pure(labels, start).unwrap();
    let grid = uniform_grid(every as f64 * p.time_step, CHECKPOINTS);
    let sol = evolve(&rho0, h, channels, p.time_step, &grid).unwrap();
    let tol = 4.0 / (n as f64).sqrt();
    let mut worst: f64 = 0.0;
    for (k, rho) in sol.states.iter().enumerate().skip(1) {
        for (j, label) in labels.iter().chain(std::iter::once(&OUT)).enumerate() {
            let mc = runs.iter().map(|r| r[k][j]).sum::<f64>() / n as f64;
            let me = rho.population(label);
            worst = worst.max((mc - me).abs());
            assert!((mc - me).abs() <= tol, "t={} {label}: ensemble {mc} vs master equation {me}", grid[k]);
        }
    }
    assert!(worst > 0.0);
}

#[test]
fn qubit_ensemble_matches_master_equation() {
    let p = ModelParams { detuning: 0.0, rabi_frequency: 10.0, relaxation: 0.25, tunneling: 1.0, ..ModelParams::default() };
    compare(&qubit_rotating(p.detuning, p.rabi_frequency), &qubit_channels(&p), &p, "0", 10_000, 101);
}

#[test]
fn four_level_ensemble_matches_master_equation() {
    let p = ModelParams { coupling: 2.0, ..ModelParams::default() };
    let h = four_level_rotating_from(&p);
    compare(&h, &four_level_channels(&p), &p, "0e", 10_000, 202);
    assert_eq!(h.basis(), Basis::Bare);
}

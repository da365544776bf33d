use std::sync::Arc;

use wwlab_core::asymptotics::{population_approx, LevelTables};
use wwlab_core::atom::{DiagRotation, EigenFrame, FrameOptions};
use wwlab_core::bath::BathSpec;
use wwlab_core::hilbert::{
    evolve_state, field_amplitude_closed_form, propagate_exact, ExactOptions, ModeGrid, SingleExcitationState,
};
use wwlab_core::linalg::{c, CVec, C64};
use wwlab_core::reduced::atomic_propagator;
use wwlab_core::Error;

fn setup() -> (EigenFrame, BathSpec, CVec) {
    let frame = EigenFrame::new(Arc::new(DiagRotation::reference_two_level()), FrameOptions::default()).unwrap();
    (frame, BathSpec::reference(), CVec::from_vec(vec![c(1.0), c(0.0)]))
}

fn overridden() -> ExactOptions {
    ExactOptions { override_smallness: true, ..Default::default() }
}

#[test]
fn discretization_reference_grid() {
    let bath = BathSpec::reference();
    let grid = ModeGrid::discretize(&bath, 0.05, 1e-4).unwrap();
    assert!((600..=700).contains(&grid.len()), "N = {}", grid.len());
    let err = (0..=400)
        .map(|k| {
            let t = k as f64 * 0.05;
            (grid.correlation(t) - bath.correlation(t).unwrap()).norm()
        })
        .fold(0.0, f64::max);
    assert!(err < 1e-4);
    let total: f64 = grid.weights.iter().zip(&grid.omega).map(|(u, w)| u * bath.density(*w)).sum();
    assert!((total - 2.0).abs() < 1e-6);
}

#[test]
fn doubling_modes_reduces_error_at_least_quadratically() {
    let bath = BathSpec::reference();
    let l1 = bath.l1_norm().unwrap();
    let horizon = 20.0;
    let e1 = ModeGrid::gauss_legendre(&bath, 40, l1).correlation_error(&bath, horizon).unwrap();
    let e2 = ModeGrid::gauss_legendre(&bath, 80, l1).correlation_error(&bath, horizon).unwrap();
    assert!(e1 / e2 >= 4.0, "{e1:.3e} -> {e2:.3e}");
}

#[test]
fn discretization_failure_reports_achieved_error() {
    let bath = BathSpec::reference();
    match ModeGrid::discretize(&bath, 0.5, 1e-30) {
        Err(Error::Discretization { achieved, .. }) => assert!(achieved > 0.0),
        other => panic!("expected a discretization error, got {other:?}"),
    }
}

#[test]
fn norm_conservation_reference() {
    let (frame, bath, z0) = setup();
    let eps: f64 = 0.05;
    let grid = ModeGrid::discretize(&bath, eps, 1e-6).unwrap();
    let traj = propagate_exact(&frame, &grid, &z0, eps, eps.sqrt(), 1.0, &overridden()).unwrap();
    let defect = traj.norm_defect.unwrap().into_iter().fold(0.0, f64::max);
    assert!(defect < 1e-8, "{defect:.3e}");
    for k in 0..traj.times.len() {
        let sum: f64 = traj.populations[k].iter().sum();
        assert!((sum - (1.0 - traj.p_down[k])).abs() < 1e-12);
    }
}

#[test]
fn decoupled_dynamics_is_free_atomic_evolution() {
    let (frame, bath, z0) = setup();
    let eps = 0.1;
    let grid = ModeGrid::discretize(&bath, eps, 1e-6).unwrap();
    let opts = ExactOptions { store_field: true, ..Default::default() };
    let traj = propagate_exact(&frame, &grid, &z0, eps, 0.0, 1.0, &opts).unwrap();
    for k in [0, 57, 200] {
        let u = atomic_propagator(&frame, eps, traj.times[k], 0.0).unwrap();
        assert!((&u * &z0 - &traj.z[k]).norm() < 1e-7, "sample {k}");
        assert!(traj.field.as_ref().unwrap()[k].iter().all(|f| f.norm() == 0.0));
        assert!((traj.p_down[k]).abs() < 1e-9);
    }
    // Adiabatic theorem: the populations stay put up to O(ε).
    assert!((traj.populations[200][0] - 1.0).abs() < 2.0 * eps);
}

#[test]
fn smallness_is_enforced_unless_overridden() {
    let (frame, bath, z0) = setup();
    let grid = ModeGrid::discretize(&bath, 0.2, 1e-6).unwrap();
    let err = propagate_exact(&frame, &grid, &z0, 0.2, 0.2f64.sqrt(), 1.0, &ExactOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Smallness { .. }));
    assert!(propagate_exact(&frame, &grid, &z0, 0.2, 0.2f64.sqrt(), 1.0, &overridden()).is_ok());
}

#[test]
fn time_reversal_recovers_initial_state() {
    let (frame, bath, z0) = setup();
    let eps = 0.1;
    let lambda = 0.15;
    let grid = ModeGrid::discretize(&bath, eps, 1e-6).unwrap();
    let start = SingleExcitationState { z: z0.clone(), f: vec![C64::new(0.0, 0.0); grid.len()] };
    let there = evolve_state(&frame, &grid, eps, lambda, &start, 0.0, 0.8, 1e-11).unwrap();
    let back = evolve_state(&frame, &grid, eps, lambda, &there, 0.8, 0.0, 1e-11).unwrap();
    assert!((back.z - z0).norm() < 1e-6);
    assert!(back.f.iter().map(|f| f.norm_sqr()).sum::<f64>() < 1e-12);
}

#[test]
fn closed_form_field_matches_propagated_field() {
    let (frame, bath, z0) = setup();
    let eps: f64 = 0.05;
    let lambda = 0.15;
    let grid = ModeGrid::discretize(&bath, eps, 1e-6).unwrap();
    let opts = ExactOptions { dt_out: 1.0 / 4000.0, store_field: true, ..Default::default() };
    let traj = propagate_exact(&frame, &grid, &z0, eps, lambda, 1.0, &opts).unwrap();
    let at = [0, 1000, 4000];
    let closed = field_amplitude_closed_form(&traj, &grid, &frame, eps, lambda, &at).unwrap();
    for (n, &k) in at.iter().enumerate() {
        let direct = &traj.field.as_ref().unwrap()[k];
        let diff = closed[n].iter().zip(direct).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-4, "sample {k}: {diff:.3e}");
    }
    assert!(closed[0].iter().all(|f| f.norm() == 0.0));
}

#[test]
fn closed_form_field_rejects_coarse_history() {
    let (frame, bath, z0) = setup();
    let eps: f64 = 0.05;
    let grid = ModeGrid::discretize(&bath, eps, 1e-6).unwrap();
    let traj = propagate_exact(&frame, &grid, &z0, eps, 0.1, 1.0, &ExactOptions::default()).unwrap();
    let err = field_amplitude_closed_form(&traj, &grid, &frame, eps, 0.1, &[10]).unwrap_err();
    assert!(matches!(err, Error::Resolution(_)));
}

#[test]
fn populations_follow_decay_law() {
    let (frame, bath, z0) = setup();
    let eps: f64 = 0.05;
    let lambda = eps.sqrt();
    let grid = ModeGrid::discretize(&bath, eps, 1e-6).unwrap();
    let traj = propagate_exact(&frame, &grid, &z0, eps, lambda, 1.0, &overridden()).unwrap();
    let tables = LevelTables::new(&frame, &bath).unwrap();
    let predicted = population_approx(&tables, eps, lambda, 1.0, 0, 1.0);
    // C·ε with C measured around 1 on this path.
    assert!((traj.populations[200][0] - predicted).abs() < 2.0 * eps);
}

#[test]
fn mode_grid_refinement_is_invisible() {
    let (frame, bath, z0) = setup();
    let eps = 0.1;
    let lambda = 0.15;
    let coarse = ModeGrid::discretize(&bath, eps, 1e-6).unwrap();
    let fine = ModeGrid::gauss_legendre(&bath, 2 * coarse.len() / 8, coarse.gamma_l1);
    let a = propagate_exact(&frame, &coarse, &z0, eps, lambda, 1.0, &ExactOptions::default()).unwrap();
    let b = propagate_exact(&frame, &fine, &z0, eps, lambda, 1.0, &ExactOptions::default()).unwrap();
    for j in 0..2 {
        assert!((a.populations[200][j] - b.populations[200][j]).abs() < 1e-4);
    }
}

#[test]
fn strong_coupling_empties_the_atom() {
    let (frame, bath, z0) = setup();
    let eps: f64 = 0.02;
    let lambda = (10.0 * eps).sqrt();
    let grid = ModeGrid::discretize(&bath, eps, 1e-6).unwrap();
    let traj = propagate_exact(&frame, &grid, &z0, eps, lambda, 1.0, &overridden()).unwrap();
    assert!(traj.final_z().norm_squared() < 0.05);
}

#[test]
fn trajectory_csv_schema() {
    let (frame, bath, z0) = setup();
    let grid = ModeGrid::discretize(&bath, 0.2, 1e-6).unwrap();
    let opts = ExactOptions { store_field: true, dt_out: 0.25, ..Default::default() };
    let traj = propagate_exact(&frame, &grid, &z0, 0.2, 0.1, 1.0, &opts).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exact.csv");
    traj.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,z1_re,z1_im,z2_re,z2_im,p_1,p_2,p_down,norm_defect");
    assert_eq!(lines.count(), 5);
    let field = dir.path().join("field.csv");
    traj.write_field_csv(&field, &grid).unwrap();
    let text = std::fs::read_to_string(&field).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,omega,abs2");
    assert_eq!(text.lines().count(), 1 + 5 * grid.len());
}

use std::f64::consts::PI;
use std::sync::Arc;

use conic_flow::diagnostics::{
    c0_and_phidot_monitor, curvature_residual, gauss_bonnet_cone_check, initial_metric_independence, ke_residual,
    omega_shift_test, scaling_correspondence, smooth_bump, trace_monitor, DiagnosticsError, DiagnosticsRecord,
};
use conic_flow::flow::{
    epsilon_continuation, run, FlowMode, FlowParams, FlowProblem, LadderStart, SolverConfig, StepMethod,
};
use conic_flow::geometry::{build_football, build_torus_cone, round_sphere, DiscreteGeometry, TorusSpec};

fn football(n: usize) -> Arc<DiscreteGeometry> {
    Arc::new(build_football(0.5, 0.5, 4.0 * PI, n).unwrap())
}

fn torus(n: usize) -> Arc<DiscreteGeometry> {
    Arc::new(build_torus_cone(&TorusSpec::unit(0.5, n)).unwrap())
}

fn stationary_config(tol: f64) -> SolverConfig {
    SolverConfig {
        method: StepMethod::Rkc,
        t_end: 60.0,
        dt_max: 1.0,
        tol_stationary: Some(tol),
        ..Default::default()
    }
}

#[test]
fn trace_is_one_at_the_start() {
    let g = football(64);
    let p = FlowProblem::new(g, FlowParams::new(FlowMode::Unnormalized, 0.1)).unwrap();
    let s = p.initial_state().unwrap();
    assert_eq!(trace_monitor(&p, &s), (1.0, 1.0));
}

#[test]
fn records_are_reproducible_from_saved_states() {
    let p = FlowProblem::new(torus(64), FlowParams::new(FlowMode::Normalized, 0.1)).unwrap();
    let cfg = SolverConfig { method: StepMethod::Rkc, t_end: 0.5, checkpoints: vec![0.2], ..Default::default() };
    let traj = run(&p, &cfg).unwrap();
    for cp in &traj.checkpoints {
        let again = DiagnosticsRecord::from_state(&p, &cp.state, cp.record.dt);
        assert_eq!(again, cp.record);
        assert!(again.is_finite());
    }
}

#[test]
fn every_record_of_a_run_is_finite() {
    let p = FlowProblem::new(football(64), FlowParams::new(FlowMode::Unnormalized, 0.1)).unwrap();
    let traj = run(&p, &SolverConfig { t_end: 1.0, ..Default::default() }).unwrap();
    assert!(traj.records.iter().all(DiagnosticsRecord::is_finite));
}

#[test]
fn hyperbolic_density_has_curvature_minus_one() {
    // A large Poincaré disc λ = 4R²/(R² − r²)² centred in the torus chart.
    let n = 128;
    let g = torus(n);
    let radius = 10.0;
    let centre = [0.5, 0.5];
    let r2: Vec<f64> = g
        .coords()
        .iter()
        .map(|c| (c[0] - centre[0]).powi(2) + (c[1] - centre[1]).powi(2))
        .collect();
    let w: Vec<f64> = r2
        .iter()
        .map(|&r2| 4.0 * radius * radius / (radius * radius - r2).powi(2))
        .collect();
    let inside: Vec<bool> = r2.iter().map(|&r2| r2 < 0.3 * 0.3).collect();
    let res = curvature_residual(&g, &w, &inside);
    assert!(res < 1e-6, "{res:e}");
}

#[test]
fn ke_residual_refuses_moving_states() {
    let p = FlowProblem::new(torus(64), FlowParams::new(FlowMode::Normalized, 0.05)).unwrap();
    let s = p.initial_state().unwrap();
    assert!(matches!(ke_residual(&p, &s, 0.2, 1e-4), Err(DiagnosticsError::NotStationary { .. })));
    let u = FlowProblem::new(torus(64), FlowParams::new(FlowMode::Unnormalized, 0.05)).unwrap();
    let s = u.initial_state().unwrap();
    assert_eq!(ke_residual(&u, &s, 0.2, 1e-4), Err(DiagnosticsError::ModeMismatch));
}

#[test]
fn torus_limit_is_nearly_hyperbolic_with_cone_defect() {
    let p = FlowProblem::new(torus(64), FlowParams::new(FlowMode::Normalized, 0.05)).unwrap();
    let traj = run(&p, &stationary_config(1e-4)).unwrap();
    let s = traj.final_state();
    let res = ke_residual(&p, s, 0.2, 1e-4).unwrap();
    assert!(res < 0.1, "{res}");
    // ∫K dA = 2π(χ − (1−β)) = −π once the disc is credited.
    let defect = gauss_bonnet_cone_check(&p, s, 0.2);
    assert!(defect < 0.02 * 2.0 * PI, "{defect}");
}

#[test]
fn round_sphere_satisfies_gauss_bonnet() {
    let g = Arc::new(round_sphere(4.0 * PI, 128).unwrap());
    let p = FlowProblem::new(g, FlowParams::new(FlowMode::Unnormalized, 0.1)).unwrap();
    let s = p.initial_state().unwrap();
    assert!(gauss_bonnet_cone_check(&p, &s, 0.1) < 1e-6);
}

#[test]
fn uniformity_needs_two_rungs() {
    let cfg = SolverConfig { t_end: 0.1, epsilon_ladder: vec![0.1], ..Default::default() };
    let lad = epsilon_continuation(football(64), FlowParams::new(FlowMode::Unnormalized, 0.1), &cfg, LadderStart::Cold, 1)
        .unwrap();
    assert!(matches!(c0_and_phidot_monitor(&lad, 0.1), Err(DiagnosticsError::TooFewRungs { .. })));
}

#[test]
fn c0_bound_is_uniform_along_the_football_ladder() {
    // k = 2 makes ω₀ + k∂∂̄χ conical on the scales the ladder resolves.
    let cfg = SolverConfig { t_end: 0.5, epsilon_ladder: vec![0.2, 0.1, 0.05], ..Default::default() };
    let params = FlowParams::new(FlowMode::Unnormalized, 0.2).with_k(2.0);
    let lad = epsilon_continuation(football(128), params, &cfg, LadderStart::Cold, 3).unwrap();
    let report = c0_and_phidot_monitor(&lad, 0.1).unwrap();
    assert!(report.spread_c0 < 0.25, "{report:?}");
    assert!(report.violations.is_empty(), "{report:?}");
}

#[test]
fn zero_shift_changes_nothing() {
    let g = football(64);
    let cfg = SolverConfig { t_end: 0.5, checkpoints: vec![0.25], ..Default::default() };
    let f = vec![0.0; g.len()];
    let r = omega_shift_test(g, FlowParams::new(FlowMode::Unnormalized, 0.1), &cfg, &f).unwrap();
    assert_eq!(r.times, [0.0, 0.25, 0.5]);
    assert!(r.sup_diff.iter().all(|&d| d == 0.0));
}

#[test]
fn volume_form_shift_is_absorbed_by_t_f() {
    let g = football(128);
    let f = smooth_bump(&g, 0.1);
    assert!(f.iter().any(|&v| v > 0.09));
    let cfg = SolverConfig { t_end: 1.0, checkpoints: vec![0.25, 0.5], ..Default::default() };
    let r = omega_shift_test(g, FlowParams::new(FlowMode::Unnormalized, 0.1), &cfg, &f).unwrap();
    assert!(r.sup_diff.iter().all(|&d| d < 1e-6), "{r:?}");
}

#[test]
fn limit_does_not_depend_on_the_smoothing_constant() {
    let params = FlowParams::new(FlowMode::Normalized, 0.05).with_k(0.03);
    let r = initial_metric_independence(torus(64), params, 0.06, &stationary_config(1e-5), 0.2).unwrap();
    assert!(r.sup_diff < 1e-3, "{r:?}");
}

#[test]
fn normalized_run_is_a_rescaled_unnormalized_run() {
    let tol = 1e-6;
    let cfg = SolverConfig { tol_step: tol, ..Default::default() };
    let r = scaling_correspondence(torus(64), FlowParams::new(FlowMode::Normalized, 0.05), &cfg, &[0.5, 1.0], 0.2)
        .unwrap();
    assert!(r.sup_density_diff.iter().all(|&d| d < 3.0 * tol), "{r:?}");
}

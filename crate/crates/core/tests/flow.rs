use std::f64::consts::PI;
use std::sync::Arc;

use conic_flow::flow::{
    epsilon_continuation, run, FlowError, FlowMode, FlowParams, FlowProblem, LadderStart, Outcome, SolverConfig,
    StepMethod,
};
use conic_flow::geometry::{build_football, build_torus_cone, DiscreteGeometry, TorusSpec};
use proptest::prelude::*;

fn football(n: usize) -> Arc<DiscreteGeometry> {
    Arc::new(build_football(0.5, 0.5, 4.0 * PI, n).unwrap())
}

fn torus(n: usize) -> Arc<DiscreteGeometry> {
    Arc::new(build_torus_cone(&TorusSpec::unit(0.5, n)).unwrap())
}

fn problem(g: &Arc<DiscreteGeometry>, mode: FlowMode, eps: f64) -> FlowProblem {
    FlowProblem::new(g.clone(), FlowParams::new(mode, eps)).unwrap()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn zero_end_time_gives_the_initial_state_only() {
    let p = problem(&football(64), FlowMode::Unnormalized, 0.1);
    let traj = run(&p, &SolverConfig { t_end: 0.0, ..Default::default() }).unwrap();
    assert_eq!(traj.checkpoints.len(), 1);
    assert!(traj.final_state().phi.iter().all(|&v| v == 0.0));
    assert_eq!(traj.outcome, Outcome::Completed { t: 0.0 });
}

#[test]
fn normalized_and_unnormalized_rhs_differ_by_k_chi_at_start() {
    let g = football(64);
    let u = problem(&g, FlowMode::Unnormalized, 0.05);
    let n = problem(&g, FlowMode::Normalized, 0.05);
    let zero = vec![0.0; g.len()];
    let (ru, rn) = (u.rhs(0.0, &zero).unwrap(), n.rhs(0.0, &zero).unwrap());
    for i in 0..g.len() {
        assert_eq!(ru[i] - n.chi_sum()[i], rn[i]);
    }
}

#[test]
fn rhs_matches_a_hand_assembled_log_ratio() {
    // Background assembled from the geometry fields and the smoothing
    // function directly, independently of the problem's cached forms.
    let g = football(128);
    let eps = 0.05;
    let p = problem(&g, FlowMode::Unnormalized, eps);
    let t = 0.3;
    let phi: Vec<f64> = g.coords().iter().map(|c| 0.05 * (2.0 * c[0]).cos()).collect();
    let k = p.params().k;
    let mut chi = vec![0.0; g.len()];
    let mut rho: Vec<f64> = g.ric_volume().iter().map(|r| -r).collect();
    let mut source: Vec<f64> = g.volume().iter().map(|v| -v.ln()).collect();
    for (cone, sp) in g.cones().iter().zip(p.smoothing()) {
        for i in 0..g.len() {
            chi[i] += k * sp.chi(cone.norm_sq[i]).unwrap();
            rho[i] += (1.0 - cone.beta) * cone.curvature[i];
            source[i] += (1.0 - cone.beta) * (cone.norm_sq[i] + eps * eps).ln();
        }
    }
    let ddb_chi = g.ddbar(&chi);
    let ddb_phi = g.ddbar(&phi);
    let rhs = p.rhs(t, &phi).unwrap();
    for i in 0..g.len() {
        let w = g.omega0()[i] + t * rho[i] + ddb_chi[i] + ddb_phi[i];
        let expected = w.ln() + source[i];
        assert!((rhs[i] - expected).abs() < 1e-12, "cell {i}: {} vs {expected}", rhs[i]);
    }
}

#[test]
fn rhs_stays_finite_next_to_the_cone_point() {
    let g = football(128);
    let near = g.nearest_cell(0);
    for eps in [0.2, 0.1, 0.05, 0.025] {
        let p = problem(&g, FlowMode::Unnormalized, eps);
        let r = p.rhs(0.0, &vec![0.0; g.len()]).unwrap();
        assert!(r[near].abs() <= 10.0, "ε = {eps}: {}", r[near]);
    }
}

#[test]
fn nonpositive_density_is_reported_with_its_cell() {
    let g = football(64);
    let p = problem(&g, FlowMode::Unnormalized, 0.1);
    let mut phi = vec![0.0; g.len()];
    phi[10] = 50.0;
    match p.rhs(0.0, &phi) {
        Err(FlowError::NonpositiveDensity { index, value, .. }) => {
            assert!(value <= 0.0);
            assert!((9..=11).contains(&index));
        }
        other => panic!("expected NonpositiveDensity, got {other:?}"),
    }
}

#[test]
fn area_halves_at_unit_time_on_the_football() {
    let p = problem(&football(128), FlowMode::Unnormalized, 0.05);
    let traj = run(&p, &SolverConfig { t_end: 1.0, ..Default::default() }).unwrap();
    let rec = &traj.checkpoints.last().unwrap().record;
    assert_eq!(traj.final_state().t, 1.0);
    assert!((rec.area / (2.0 * PI) - 1.0).abs() < 0.01, "{}", rec.area);
    assert!(traj.max_class_defect < 1e-8);
}

#[test]
fn football_extinction_matches_the_class_time() {
    let p = problem(&football(128), FlowMode::Unnormalized, 0.05);
    let traj = run(&p, &SolverConfig { t_end: 2.5, ..Default::default() }).unwrap();
    match traj.outcome {
        Outcome::Extinction { t_num, .. } => assert!((t_num / 2.0 - 1.0).abs() < 0.02, "{t_num}"),
        other => panic!("expected extinction, got {other:?}"),
    }
    assert!(traj.max_class_defect < 1e-8, "{}", traj.max_class_defect);
}

#[test]
fn torus_normalized_flow_settles_at_area_pi() {
    let p = problem(&torus(64), FlowMode::Normalized, 0.05);
    let cfg = SolverConfig {
        method: StepMethod::Rkc,
        t_end: 40.0,
        dt_max: 1.0,
        tol_stationary: Some(1e-4),
        ..Default::default()
    };
    let traj = run(&p, &cfg).unwrap();
    assert!(matches!(traj.outcome, Outcome::Stationary { .. }), "{:?}", traj.outcome);
    let area = traj.records.last().unwrap().area;
    assert!((area / PI - 1.0).abs() < 0.02, "{area}");
}

#[test]
fn identical_configs_give_identical_trajectories() {
    let p = problem(&football(64), FlowMode::Unnormalized, 0.1);
    let cfg = SolverConfig { t_end: 0.3, checkpoints: vec![0.1], ..Default::default() };
    assert_eq!(run(&p, &cfg).unwrap(), run(&p, &cfg).unwrap());
}

#[test]
fn tighter_tolerance_moves_the_solution_by_little() {
    // Step-doubling oracle with RKC, whose steps are tolerance-limited.
    let p = problem(&football(128), FlowMode::Unnormalized, 0.1);
    let at = |tol: f64| {
        let cfg = SolverConfig { method: StepMethod::Rkc, t_end: 0.5, tol_step: tol, ..Default::default() };
        run(&p, &cfg).unwrap().final_state().phi.clone()
    };
    let tol = 1e-5;
    let diff = sup_diff(&at(tol), &at(tol / 2.0));
    assert!(diff < 4.0 * tol, "{diff:e}");
}

#[test]
fn phidot_obeys_its_own_evolution_equation() {
    // ∂φ̇/∂t = (∂∂̄φ̇ + ρ)/ω for the unnormalized flow.
    let g = football(128);
    let p = problem(&g, FlowMode::Unnormalized, 0.1);
    let (t, delta) = (0.4, 1e-4);
    let cfg = SolverConfig { t_end: t + delta, checkpoints: vec![t], ..Default::default() };
    let traj = run(&p, &cfg).unwrap();
    let a = &traj.checkpoint_at(t).unwrap().state;
    let b = &traj.checkpoint_at(t + delta).unwrap().state;
    let w = p.metric_density(t, &a.phi);
    let lap = g.ddbar(&a.phidot);
    let mask = g.compact_mask(0.2);
    let mut err: f64 = 0.0;
    for i in (0..g.len()).filter(|&i| mask[i]) {
        let fd = (b.phidot[i] - a.phidot[i]) / delta;
        let exact = (lap[i] + p.rho_form()[i]) / w[i];
        err = err.max((fd - exact).abs() / exact.abs().max(1.0));
    }
    assert!(err < 1e-3, "{err:e}");
}

#[test]
fn single_rung_ladder_is_a_plain_run() {
    let g = football(64);
    let cfg = SolverConfig { t_end: 0.2, epsilon_ladder: vec![0.1], ..Default::default() };
    let lad = epsilon_continuation(g.clone(), FlowParams::new(FlowMode::Unnormalized, 0.3), &cfg, LadderStart::Cold, 1)
        .unwrap();
    let direct = run(&problem(&g, FlowMode::Unnormalized, 0.1), &cfg).unwrap();
    assert_eq!(lad.finest(), &direct);
    assert!(lad.cauchy.is_empty());
}

#[test]
fn football_ladder_is_cauchy() {
    let cfg = SolverConfig { t_end: 0.5, epsilon_ladder: vec![0.2, 0.1, 0.05], ..Default::default() };
    let lad = epsilon_continuation(football(128), FlowParams::new(FlowMode::Unnormalized, 0.2), &cfg, LadderStart::Cold, 3)
        .unwrap();
    assert!(!lad.non_cauchy);
    let r = lad.ratios();
    assert!(r[0] >= 1.5, "{r:?}");
}

#[test]
fn threaded_and_serial_ladders_agree_bitwise() {
    let cfg = SolverConfig { t_end: 0.2, epsilon_ladder: vec![0.2, 0.1, 0.05], ..Default::default() };
    let params = FlowParams::new(FlowMode::Unnormalized, 0.2);
    let a = epsilon_continuation(football(64), params, &cfg, LadderStart::Cold, 1).unwrap();
    let b = epsilon_continuation(football(64), params, &cfg, LadderStart::Cold, 3).unwrap();
    assert_eq!(a.cauchy, b.cauchy);
    assert_eq!(a.finest(), b.finest());
}

#[test]
fn warm_ladders_ending_at_the_same_epsilon_agree() {
    let g = torus(64);
    let params = FlowParams::new(FlowMode::Normalized, 0.2);
    let tol = 1e-6;
    let cfg = |ladder: Vec<f64>| SolverConfig {
        method: StepMethod::Rkc,
        t_end: 60.0,
        dt_max: 1.0,
        tol_stationary: Some(tol),
        epsilon_ladder: ladder,
        ..Default::default()
    };
    let a = epsilon_continuation(g.clone(), params, &cfg(vec![0.2, 0.1, 0.05]), LadderStart::Warm, 1).unwrap();
    let b = epsilon_continuation(g.clone(), params, &cfg(vec![0.15, 0.05]), LadderStart::Warm, 1).unwrap();
    for l in [&a, &b] {
        assert!(matches!(l.finest().outcome, Outcome::Stationary { .. }));
    }
    let diff = sup_diff(&a.finest().final_state().phi, &b.finest().final_state().phi);
    assert!(diff < 10.0 * tol, "{diff:e}");
}

#[test]
fn warm_starts_are_refused_for_unnormalized_runs() {
    let cfg = SolverConfig { epsilon_ladder: vec![0.2, 0.1], ..Default::default() };
    let r = epsilon_continuation(football(64), FlowParams::new(FlowMode::Unnormalized, 0.2), &cfg, LadderStart::Warm, 1);
    assert!(matches!(r, Err(FlowError::InvalidConfig(_))));
}

#[test]
fn config_problems_are_all_reported() {
    let cfg = SolverConfig {
        dt_init: 1.0,
        dt_max: 0.1,
        safety: 1.5,
        epsilon_ladder: vec![0.1, 0.2],
        ..Default::default()
    };
    let fields: Vec<&str> = cfg.problems().iter().map(|(f, _)| *f).collect();
    assert_eq!(fields, ["dt_init", "safety", "epsilon_ladder"]);
    assert!(cfg.problems()[2].1.contains("ladder not decreasing"));
}

#[test]
fn checkpoints_land_exactly_on_requested_times() {
    let p = problem(&football(64), FlowMode::Unnormalized, 0.1);
    let cfg = SolverConfig { t_end: 0.5, checkpoints: vec![0.1, 0.25], ..Default::default() };
    let times: Vec<f64> = run(&p, &cfg).unwrap().checkpoints.iter().map(|c| c.state.t).collect();
    assert_eq!(times, [0.0, 0.1, 0.25, 0.5]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn volume_matches_the_class_for_any_potential(
        amp in -0.2f64..0.2,
        freq in 1u32..6,
        t in 0.0f64..1.0,
        normalized in any::<bool>(),
    ) {
        let g = football(64);
        let mode = if normalized { FlowMode::Normalized } else { FlowMode::Unnormalized };
        let p = problem(&g, mode, 0.1);
        let phi: Vec<f64> = g.coords().iter().map(|c| amp * (freq as f64 * c[0]).cos()).collect();
        let w = p.metric_density(t, &phi);
        let area = g.integrate(&w);
        let class = p.class_path().area_at(t);
        prop_assert!((area - class).abs() < 1e-10 * class.abs(), "{} vs {}", area, class);
    }
}

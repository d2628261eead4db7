use std::f64::consts::PI;

use conic_flow::geometry::{build_football, build_torus_cone, round_sphere, DiscreteGeometry, TorusSpec};
use proptest::prelude::*;

fn football(n: usize) -> DiscreteGeometry {
    build_football(0.5, 0.5, 4.0 * PI, n).unwrap()
}

fn torus(n: usize) -> DiscreteGeometry {
    build_torus_cone(&TorusSpec::unit(0.5, n)).unwrap()
}

/// Poincaré–Lelong residual `∂∂̄ log||S||² + R` for cone point 0.
fn pl_residual(g: &DiscreteGeometry) -> Vec<f64> {
    let cone = &g.cones()[0];
    g.ddbar(&cone.log_norm_sq)
        .iter()
        .zip(&cone.curvature)
        .map(|(d, r)| d + r)
        .collect()
}

fn sup_on(values: &[f64], mask: &[bool]) -> f64 {
    values
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| v.abs())
        .fold(0.0, f64::max)
}

#[test]
fn initial_area_matches_declared() {
    for g in [football(128), torus(64)] {
        let rel = g.integrate(g.omega0()) / g.area0() - 1.0;
        assert!(rel.abs() < 1e-8, "{rel}");
    }
    let t = build_torus_cone(&TorusSpec {
        beta: 0.3,
        periods: [1.0, 2.0],
        area0: 5.0,
        resolution: 64,
        cone_point: [0.0, 1.0],
    })
    .unwrap();
    assert!((t.integrate(t.omega0()) / 5.0 - 1.0).abs() < 1e-12);
}

#[test]
fn bundle_degrees_are_one_point() {
    let f = football(128);
    for cone in f.cones() {
        let deg = f.integrate(&cone.curvature);
        assert!((deg / (2.0 * PI) - 1.0).abs() < 1e-6, "{deg}");
    }
    let t = torus(64);
    let deg = t.integrate(&t.cones()[0].curvature);
    assert!((deg / (2.0 * PI) - 1.0).abs() < 1e-10, "{deg}");
}

#[test]
fn gauss_bonnet_for_the_volume_form() {
    let f = football(128);
    assert!((f.integrate(f.ric_volume()) / (4.0 * PI) - 1.0).abs() < 1e-6);
    let t = torus(64);
    assert!(t.integrate(t.ric_volume()).abs() < 1e-12);
}

#[test]
fn torus_green_normalization() {
    let t = torus(64);
    let cone = &t.cones()[0];
    let max = cone.norm_sq.iter().cloned().fold(0.0, f64::max);
    assert_eq!(max, 1.0);
    // log||S||² = 4πG + c and G has mean zero, so the mean of the log is c.
    let c = cone.log_norm_sq.iter().sum::<f64>() / cone.log_norm_sq.len() as f64;
    let g: Vec<f64> = cone.log_norm_sq.iter().map(|l| (l - c) / (4.0 * PI)).collect();
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    assert!(mean.abs() < 1e-12);
}

#[test]
fn torus_poincare_lelong_concentrates_at_the_point() {
    for n in [64, 128] {
        let t = torus(n);
        let res = pl_residual(&t);
        let h = t.cell_size();
        let near: Vec<bool> = t.cones()[0].distance.iter().map(|&d| d <= 3.0 * h).collect();
        let mass = t.integrate_masked(&res, &near);
        assert!(mass / (2.0 * PI) >= 0.99, "n = {n}: captured {}", mass / (2.0 * PI));
    }
}

#[test]
fn poincare_lelong_is_second_order_away_from_the_point() {
    // log||S₀||² on the football has derivatives growing like θ⁻ᵏ toward the
    // pole, so the asymptotic regime starts later there than on the torus.
    let cases: [(fn(usize) -> DiscreteGeometry, usize, f64); 2] = [(football, 128, 0.4), (torus, 64, 0.2)];
    for (build, n, d) in cases {
        let coarse = build(n);
        let fine = build(2 * n);
        let rc = sup_on(&pl_residual(&coarse), &coarse.compact_mask(d));
        let rf = sup_on(&pl_residual(&fine), &fine.compact_mask(d));
        assert!(rc / rf >= 3.5, "{:?}: {rc:e} -> {rf:e}", coarse.kind());
    }
}

#[test]
fn quadratic_in_the_chart_gives_constant_density() {
    // On the torus f = cos(2πx) has ∂∂̄f = −2π² cos(2πx); the 5-point stencil
    // is second order, so the error drops 4× per refinement.
    let err = |n: usize| {
        let t = torus(n);
        let f: Vec<f64> = t.coords().iter().map(|c| (2.0 * PI * c[0]).cos()).collect();
        t.ddbar(&f)
            .iter()
            .zip(&f)
            .map(|(d, f)| (d + 2.0 * PI * PI * f).abs())
            .fold(0.0, f64::max)
    };
    let ratio = err(64) / err(128);
    assert!(ratio > 3.9 && ratio < 4.1, "{ratio}");

    // On the football, ∂∂̄(x²) = d/dx(2x²(1−x)) = 4x − 6x².
    let ferr = |n: usize| {
        let g = football(n);
        let x: Vec<f64> = g.coords().iter().map(|c| c[1]).collect();
        let f: Vec<f64> = x.iter().map(|x| x * x).collect();
        g.ddbar(&f)
            .iter()
            .zip(&x)
            .map(|(d, x)| (d - (4.0 * x - 6.0 * x * x)).abs())
            .fold(0.0, f64::max)
    };
    let ratio = ferr(64) / ferr(128);
    assert!(ratio > 3.5, "{ratio}");
}

#[test]
fn round_sphere_is_smooth_gauss_bonnet() {
    let s = round_sphere(4.0 * PI, 64).unwrap();
    assert!(s.cones().is_empty());
    let k = s.gauss_curvature(s.omega0());
    assert!(k.iter().all(|k| (k - 1.0).abs() < 1e-12));
}

#[test]
fn football_fields_are_mirror_symmetric() {
    let g = football(128);
    let (north, south) = (&g.cones()[0], &g.cones()[1]);
    let n = g.len();
    for j in 0..n {
        assert!((north.norm_sq[j] - south.norm_sq[n - 1 - j]).abs() < 1e-15);
        assert!((north.distance[j] - south.distance[n - 1 - j]).abs() < 1e-12);
    }
}

#[test]
fn initial_metric_is_asymptotically_conical() {
    // ω* = ω₀ + k∂∂̄||S₀||^{2β} near the north pole, against the model
    // k β² |z|^{2β−2} in the chart where ||S₀||² ≈ |z|².
    let (beta, k, a0) = (0.5_f64, 0.05_f64, 4.0 * PI);
    let params = conic_flow::smoothing::SmoothingParams::with_constants(beta, 0.0, k, 0.5).unwrap();
    // ω*-distance to the pole is k^{1/2} x^{β/2} to leading order; take 10⁻³.
    let x = (1e-3 / k.sqrt()).powf(2.0 / beta);
    let omega_star = a0 / (2.0 * PI) + k * params.ddbar_chi_density(x, 1.0 - x, 1.0).unwrap();
    let model = k * beta * beta * x.powf(beta - 1.0);
    assert!((omega_star / model - 1.0).abs() < 0.02, "{}", omega_star / model);
}

#[test]
fn volume_shift_changes_ricci_by_ddbar() {
    let g = football(64);
    let f: Vec<f64> = g.coords().iter().map(|c| 0.1 * (c[0]).cos()).collect();
    let shifted = g.with_volume_form(&f).unwrap();
    let ddf = g.ddbar(&f);
    for i in 0..g.len() {
        let expect = g.ric_volume()[i] - ddf[i];
        assert!((shifted.ric_volume()[i] - expect).abs() < 1e-9);
    }
    assert!(g.with_volume_form(&[0.0]).is_err());
}

#[test]
fn summaries_record_the_model() {
    let s = football(64).summary();
    assert_eq!(s.euler_char, 2);
    assert_eq!(s.betas, vec![0.5, 0.5]);
    // x at the first cell centre is sin²(π/256) ≈ 1.5e-4
    assert!((s.truncation_u.unwrap() - 8.8).abs() < 0.1);
    let t = torus(64).summary();
    assert_eq!(t.periods, Some([1.0, 1.0]));
    assert_eq!(t.cells, 64 * 64);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ddbar_integrates_to_zero(values in prop::collection::vec(-10.0f64..10.0, 64)) {
        let g = football(64);
        let total = g.integrate(&g.ddbar(&values));
        let scale: f64 = g.ddbar(&values).iter().zip(g.weights()).map(|(d, w)| (d * w).abs()).sum();
        prop_assert!(total.abs() <= 1e-13 * scale.max(1.0));
    }

    #[test]
    fn ddbar_is_linear(seed in prop::collection::vec(-1.0f64..1.0, 64 * 64 * 2), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let g = torus(64);
        let (f, h) = seed.split_at(64 * 64);
        let combo: Vec<f64> = f.iter().zip(h).map(|(x, y)| a * x + b * y).collect();
        let lhs = g.ddbar(&combo);
        let (df, dh) = (g.ddbar(f), g.ddbar(h));
        for i in 0..lhs.len() {
            let rhs = a * df[i] + b * dh[i];
            prop_assert!((lhs[i] - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }
        let total = g.integrate(&lhs);
        prop_assert!(total.abs() < 1e-9);
    }
}

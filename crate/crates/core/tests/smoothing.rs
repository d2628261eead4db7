use std::f64::consts::PI;

use conic_flow::geometry::build_football;
use conic_flow::smoothing::SmoothingParams;
use proptest::prelude::*;

fn params(beta: f64, eps: f64) -> SmoothingParams {
    SmoothingParams::new(beta, eps).unwrap()
}

/// The defining integral by a plain midpoint rule.
fn midpoint_chi(beta: f64, eps: f64, s: f64, panels: usize) -> f64 {
    let e2 = eps * eps;
    let h = s / panels as f64;
    let mut acc = 0.0;
    for i in 0..panels {
        let r = (i as f64 + 0.5) * h;
        acc += ((e2 + r).powf(beta) - e2.powf(beta)) / r;
    }
    beta * acc * h
}

#[test]
fn adaptive_quadrature_matches_midpoint_oracle() {
    let fast = params(0.5, 1.0).chi(1.0).unwrap();
    let slow = midpoint_chi(0.5, 1.0, 1.0, 1_000_000);
    assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
    // β = 1/2, ε = 1: χ = √2 − 1 − log((1 + √2)/2) in closed form.
    let closed = 2f64.sqrt() - 1.0 - ((1.0 + 2f64.sqrt()) / 2.0).ln();
    assert!((fast - closed).abs() < 1e-12, "{fast} vs {closed}");
}

#[test]
fn chi_prime_tracks_the_cone_power_for_large_arguments() {
    let eps = 0.05;
    let p = params(0.5, eps);
    let s = 1e6 * eps * eps;
    let ratio = p.chi_prime(s).unwrap() / (0.5 * s.powf(-0.5));
    assert!((ratio - 1.0).abs() < 0.01, "{ratio}");
}

#[test]
fn epsilon_limit_is_monotone() {
    let s: f64 = 0.3;
    let exact = s.powf(0.4);
    let mut last = f64::INFINITY;
    let mut first = None;
    for k in 0..8 {
        let eps = 0.5f64 * 0.5f64.powi(k);
        let err = (params(0.4, eps).chi(s).unwrap() - exact).abs();
        assert!(err < last, "ε = {eps}: {err} after {last}");
        first.get_or_insert(err);
        last = err;
    }
    // The gap closes like ε^{2β}·log(1/ε), slowly.
    assert!(last < 0.15 * first.unwrap());
}

#[test]
fn ddbar_chi_formula_agrees_with_the_discrete_operator() {
    // ∂∂̄χ(ε² + ||S₀||²) on the football, analytic vs flux-form, away from the poles.
    let p = params(0.5, 0.1);
    let error = |n: usize| {
        let g = build_football(0.5, 0.5, 4.0 * PI, n).unwrap();
        let cone = &g.cones()[0];
        let chi: Vec<f64> = cone.norm_sq.iter().map(|&s| p.chi(s).unwrap()).collect();
        let discrete = g.ddbar(&chi);
        let mask = g.compact_mask(0.5);
        (0..g.len())
            .filter(|&i| mask[i])
            .map(|i| {
                let exact = p
                    .ddbar_chi_density(cone.norm_sq[i], cone.ds_sq[i], cone.curvature[i])
                    .unwrap();
                (discrete[i] - exact).abs()
            })
            .fold(0.0, f64::max)
    };
    let order = (error(128) / error(256)).log2();
    assert!(order >= 1.9, "observed order {order}");
}

#[test]
fn discrete_ddbar_chi_integrates_to_zero() {
    let g = build_football(0.5, 0.5, 4.0 * PI, 128).unwrap();
    let p = params(0.5, 0.05);
    let chi: Vec<f64> = g.cones()[0].norm_sq.iter().map(|&s| p.chi(s).unwrap()).collect();
    let d = g.ddbar(&chi);
    let scale: f64 = d.iter().zip(g.weights()).map(|(d, w)| (d * w).abs()).sum();
    assert!(g.integrate(&d).abs() < 1e-10 * scale);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn unregularized_chi_is_the_power(s in 0.0f64..50.0, beta in 0.01f64..0.99) {
        let v = params(beta, 0.0).chi(s).unwrap();
        prop_assert!((v - s.powf(beta)).abs() < 1e-10);
    }

    #[test]
    fn chi_prime_matches_finite_differences(eps in 0.01f64..1.0, s in 0.01f64..3.0, beta in 0.1f64..0.9) {
        let p = params(beta, eps);
        let h = 1e-2 * s;
        let f = |x: f64| p.chi(x).unwrap();
        // Fourth-order central stencil.
        let fd = (8.0 * (f(s + h) - f(s - h)) - (f(s + 2.0 * h) - f(s - 2.0 * h))) / (12.0 * h);
        let exact = p.chi_prime(s).unwrap();
        prop_assert!((fd / exact - 1.0).abs() < 1e-6, "fd {} exact {}", fd, exact);
    }

    #[test]
    fn chi_is_bounded_by_its_cone_limit(eps in 0.0f64..1.0, s in 0.0f64..4.0, beta in 0.05f64..0.95) {
        let v = params(beta, eps).chi(s).unwrap();
        prop_assert!(v >= 0.0);
        prop_assert!(v <= s.powf(beta) + 1e-9);
    }

    #[test]
    fn chi_is_monotone_in_s(eps in 0.001f64..1.0, s in 0.0f64..4.0, ds in 0.0f64..1.0) {
        let p = params(0.5, eps);
        prop_assert!(p.chi(s + ds).unwrap() >= p.chi(s).unwrap() - 1e-12);
    }
}

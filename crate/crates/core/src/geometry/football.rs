//! The football: `ℙ¹` with cone points at `0` and `∞`.
//!
//! Rotational symmetry reduces everything to the moment coordinate
//! `x = ||S₀||² = |z|²/(1+|z|²) ∈ [0, 1]`, in which the Fubini–Study area
//! form is `dx∧dθ` (Archimedes) and
//!
//! ```text
//! ∂∂̄f = d/dx( x(1−x) df/dx ) dx∧dθ .
//! ```
//!
//! Cells are finite volumes whose faces are equally spaced in the polar
//! angle, `x = sin²(θ/2)`, so the poles are resolved as finely as the
//! equator in `ω₀`-distance. Both poles are cell faces with zero flux.

use std::f64::consts::PI;

use super::{
    check_area, check_beta, ConeDivisor, ConeLocation, ConePoint, DiscreteGeometry, GeometryError,
    GeometryKind, Stencil, SummaryExtra,
};

pub const MIN_RESOLUTION: usize = 64;

const FUBINI_STUDY: &str = "fubini-study: |S_0|^2 = |z|^2/(1+|z|^2), |S_inf|^2 = 1/(1+|z|^2)";

/// Football with cone angles `2πβ₀` at `0`, `2πβ∞` at `∞`, initial area `area0`
/// and `resolution` cells from pole to pole.
pub fn build_football(
    beta0: f64,
    beta_inf: f64,
    area0: f64,
    resolution: usize,
) -> Result<DiscreteGeometry, GeometryError> {
    check_beta(beta0)?;
    check_beta(beta_inf)?;
    build(Some((beta0, beta_inf)), area0, resolution)
}

/// The same grid without cone points.
pub fn round_sphere(area0: f64, resolution: usize) -> Result<DiscreteGeometry, GeometryError> {
    build(None, area0, resolution)
}

fn build(
    betas: Option<(f64, f64)>,
    area0: f64,
    n: usize,
) -> Result<DiscreteGeometry, GeometryError> {
    check_area(area0)?;
    if n < MIN_RESOLUTION {
        return Err(GeometryError::ResolutionTooLow {
            got: n,
            min: MIN_RESOLUTION,
        });
    }
    let h = PI / n as f64;
    let sin2 = |a: f64| (0.5 * a).sin().powi(2);
    let cos2 = |a: f64| (0.5 * a).cos().powi(2);
    let face_x: Vec<f64> = (0..=n).map(|j| sin2(j as f64 * h)).collect();
    let theta: Vec<f64> = (0..n).map(|j| (j as f64 + 0.5) * h).collect();
    let x: Vec<f64> = theta.iter().map(|&t| sin2(t)).collect();
    let one_minus_x: Vec<f64> = theta.iter().map(|&t| cos2(t)).collect();

    let dx: Vec<f64> = (0..n).map(|j| face_x[j + 1] - face_x[j]).collect();
    let mut coef = vec![0.0; n + 1];
    for j in 1..n {
        let xf = face_x[j];
        let xf_c = cos2(j as f64 * h);
        coef[j] = xf * xf_c / (x[j] - x[j - 1]);
    }
    let weights: Vec<f64> = dx.iter().map(|d| 2.0 * PI * d).collect();
    let omega0 = vec![area0 / (2.0 * PI); n];

    let radius = (area0 / (4.0 * PI)).sqrt();
    let mut divisor = ConeDivisor::default();
    if let Some((b0, binf)) = betas {
        divisor.points.push(ConePoint {
            beta: b0,
            location: ConeLocation::NorthPole,
            norm_sq: x.clone(),
            log_norm_sq: x.iter().map(|v| v.ln()).collect(),
            ds_sq: one_minus_x.clone(),
            curvature: vec![1.0; n],
            distance: theta.iter().map(|t| radius * t).collect(),
            metric: FUBINI_STUDY,
        });
        divisor.points.push(ConePoint {
            beta: binf,
            location: ConeLocation::SouthPole,
            norm_sq: one_minus_x.clone(),
            log_norm_sq: one_minus_x.iter().map(|v| v.ln()).collect(),
            ds_sq: x.clone(),
            curvature: vec![1.0; n],
            distance: theta.iter().map(|t| radius * (PI - t)).collect(),
            metric: FUBINI_STUDY,
        });
    }

    let truncation_u = (x[0] / one_minus_x[0]).ln().abs();
    let mut g = DiscreteGeometry {
        kind: GeometryKind::Football,
        resolution: n,
        area0,
        euler: 2,
        weights,
        omega0: omega0.clone(),
        volume: omega0,
        ric_reference: 2.0,
        ric_volume: Vec::new(),
        divisor,
        stencil: Stencil::Radial { coef, dx },
        coords: theta.iter().zip(&x).map(|(&t, &x)| [t, x]).collect(),
        summary_extra: SummaryExtra {
            truncation_u: Some(truncation_u),
            periods: None,
        },
    };
    g.ric_volume = super::ricci_of(&g, &g.volume);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn area_and_quadrature() {
        let g = build_football(0.5, 0.5, 4.0 * PI, 128).unwrap();
        let area = g.integrate(g.omega0());
        assert!((area / (4.0 * PI) - 1.0).abs() < 1e-12);
        assert_eq!(g.len(), 128);
    }

    #[test]
    fn constants_are_in_the_kernel() {
        let g = round_sphere(1.0, 64).unwrap();
        assert!(g.ddbar(&vec![3.5; 64]).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ddbar_of_the_moment_coordinate() {
        // ∂∂̄x = d/dx(x(1−x)) = 1 − 2x
        let g = round_sphere(1.0, 128).unwrap();
        let x: Vec<f64> = g.coords().iter().map(|c| c[1]).collect();
        let d = g.ddbar(&x);
        let err = d
            .iter()
            .zip(&x)
            .map(|(d, x)| (d - (1.0 - 2.0 * x)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            build_football(0.5, 0.5, 1.0, 32),
            Err(GeometryError::ResolutionTooLow { .. })
        ));
        assert_eq!(
            build_football(1.5, 0.5, 1.0, 64).unwrap_err(),
            GeometryError::InvalidBeta(1.5)
        );
        assert!(build_football(0.5, 0.5, -1.0, 64).is_err());
    }
}

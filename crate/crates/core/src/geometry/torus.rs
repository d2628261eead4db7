//! Flat torus `ℂ/(L₁ℤ + iL₂ℤ)` with one cone point on an `N × N` periodic grid.
//!
//! The Hermitian metric on `O(p)` comes from the periodic Green function,
//! `log||S||² = 4πG(·, p) + c` with `ΔG = δ_p − 1/(L₁L₂)`, so the bundle
//! curvature is the constant density `2π/(L₁L₂)` and `∫R = 2π`. `G` is the
//! continuum Green function sampled at the nodes, written through Jacobi's
//! theta function:
//!
//! ```text
//! G(x + iy) = (1/2π) log|θ₁(πz/L₁ | iL₂/L₁)| − y²/(2L₁L₂) + const.
//! ```
//!
//! A truncated Fourier sum with the continuum symbol would be the obvious
//! alternative, but applying the 5-point stencil to it leaves an aliasing
//! residual that decays only like `1/r²` away from the pole and never
//! converges; sampling the exact function keeps the residual `O(h²)`.
//! At the pole itself `G` takes its average over the cell. The grid mean of
//! `G` is removed, and `c` normalizes `sup ||S||² = 1`.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{
    check_area, check_beta, ConeDivisor, ConeLocation, ConePoint, DiscreteGeometry, GeometryError,
    GeometryKind, Stencil, SummaryExtra,
};

pub const MIN_RESOLUTION: usize = 64;

const GREEN_METRIC: &str = "periodic green function: log|S|^2 = 4*pi*G(., p) + c, sup |S|^2 = 1";
const THETA_TERMS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusSpec {
    pub beta: f64,
    pub periods: [f64; 2],
    pub area0: f64,
    pub resolution: usize,
    /// Chart coordinates of the cone point; must be a grid node.
    pub cone_point: [f64; 2],
}

impl TorusSpec {
    /// Unit square torus of area 1 with the cone point at the centre.
    pub fn unit(beta: f64, resolution: usize) -> Self {
        TorusSpec {
            beta,
            periods: [1.0, 1.0],
            area0: 1.0,
            resolution,
            cone_point: [0.5, 0.5],
        }
    }
}

pub fn build_torus_cone(spec: &TorusSpec) -> Result<DiscreteGeometry, GeometryError> {
    check_beta(spec.beta)?;
    check_area(spec.area0)?;
    let [l1, l2] = spec.periods;
    if !(l1 > 0.0 && l2 > 0.0 && l1.is_finite() && l2.is_finite()) {
        return Err(GeometryError::InvalidPeriods);
    }
    let n = spec.resolution;
    if n < MIN_RESOLUTION {
        return Err(GeometryError::ResolutionTooLow {
            got: n,
            min: MIN_RESOLUTION,
        });
    }
    let (hx, hy) = (l1 / n as f64, l2 / n as f64);
    let node = |coord: f64, h: f64, l: f64| -> Option<usize> {
        let s = coord.rem_euclid(l) / h;
        let r = s.round();
        ((s - r).abs() < 1e-9).then_some(r as usize % n)
    };
    let [px, py] = spec.cone_point;
    let (ip, jp) = match (node(px, hx, l1), node(py, hy, l2)) {
        (Some(i), Some(j)) => (i, j),
        _ => return Err(GeometryError::ConePointOffGrid { x: px, y: py }),
    };

    let green = GreenFields::compute(n, l1, l2)?;
    // Shift the origin-centred fields to the cone point.
    let roll = |f: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                let si = (i + n - ip) % n;
                let sj = (j + n - jp) % n;
                out[j * n + i] = f[sj * n + si];
            }
        }
        out
    };
    let g = roll(&green.g);
    let grad_sq = roll(&green.grad_sq);
    let gmax = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_norm_sq: Vec<f64> = g.iter().map(|v| 4.0 * PI * (v - gmax)).collect();
    let norm_sq: Vec<f64> = log_norm_sq.iter().map(|l| l.exp()).collect();
    // |DS|² = ½ ||S||² |∇ log||S||²|², which has a finite limit at the pole.
    let mut ds_sq: Vec<f64> = norm_sq
        .iter()
        .zip(&grad_sq)
        .map(|(h, g2)| 0.5 * h * (4.0 * PI).powi(2) * g2)
        .collect();
    let pole = jp * n + ip;
    ds_sq[pole] = 2.0 * (4.0 * PI * (green.regular_at_pole - gmax)).exp();

    let coord_area = l1 * l2;
    let scale = (spec.area0 / coord_area).sqrt();
    let mut coords = Vec::with_capacity(n * n);
    let mut distance = Vec::with_capacity(n * n);
    let wrap = |d: f64, l: f64| {
        let d = d.rem_euclid(l);
        d.min(l - d)
    };
    let (cx, cy) = (ip as f64 * hx, jp as f64 * hy);
    for j in 0..n {
        for i in 0..n {
            let (x, y) = (i as f64 * hx, j as f64 * hy);
            coords.push([x, y]);
            distance.push(scale * wrap(x - cx, l1).hypot(wrap(y - cy, l2)));
        }
    }

    let omega0 = vec![spec.area0 / coord_area; n * n];
    let divisor = ConeDivisor {
        points: vec![ConePoint {
            beta: spec.beta,
            location: ConeLocation::Node {
                index: [ip, jp],
                coords: [cx, cy],
            },
            norm_sq,
            log_norm_sq,
            ds_sq,
            curvature: vec![2.0 * PI / coord_area; n * n],
            distance,
            metric: GREEN_METRIC,
        }],
    };
    let mut geom = DiscreteGeometry {
        kind: GeometryKind::TorusCone,
        resolution: n,
        area0: spec.area0,
        euler: 0,
        weights: vec![hx * hy; n * n],
        omega0: omega0.clone(),
        volume: omega0,
        ric_reference: 0.0,
        ric_volume: Vec::new(),
        divisor,
        stencil: Stencil::Periodic {
            n,
            inv_hx2: 1.0 / (hx * hx),
            inv_hy2: 1.0 / (hy * hy),
        },
        coords,
        summary_extra: SummaryExtra {
            truncation_u: None,
            periods: Some(spec.periods),
        },
    };
    geom.ric_volume = super::ricci_of(&geom, &geom.volume);
    Ok(geom)
}

/// The periodic Green function with pole at the origin, sampled at the nodes.
pub(crate) struct GreenFields {
    /// `G` with zero grid mean; the pole carries its cell average.
    pub g: Vec<f64>,
    /// `|∇G|²`, zero at the pole.
    pub grad_sq: Vec<f64>,
    /// `lim (G(z) − (1/2π) log|z|)` at the pole, on the same additive normalization as `g`.
    pub regular_at_pole: f64,
}

impl GreenFields {
    pub(crate) fn compute(n: usize, l1: f64, l2: f64) -> Result<Self, GeometryError> {
        // Theta series converge fastest with the longer period vertical.
        let swap = l2 < l1;
        let (a, b) = if swap { (l2, l1) } else { (l1, l2) };
        let theta = Theta::new(b / a);
        let area = a * b;
        let (hx, hy) = (l1 / n as f64, l2 / n as f64);
        let centred = |m: usize, h: f64| {
            let m = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
            m * h
        };

        let mut g = vec![0.0; n * n];
        let mut grad_sq = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                if i == 0 && j == 0 {
                    continue;
                }
                let (x, y) = (centred(i, hx), centred(j, hy));
                let (x, y) = if swap { (y, x) } else { (x, y) };
                let w = Complex64::new(PI * x / a, PI * y / a);
                let (value, log_deriv) = theta.log_and_log_derivative(w);
                let gx = 0.5 / a * log_deriv.re;
                let gy = -0.5 / a * log_deriv.im - y / area;
                g[j * n + i] = value.re / (2.0 * PI) - y * y / (2.0 * area);
                grad_sq[j * n + i] = gx * gx + gy * gy;
            }
        }
        let regular = ((PI / a) * theta.derivative_at_zero()).ln() / (2.0 * PI);
        g[0] = regular + cell_average_log(0.5 * hx, 0.5 * hy) / (2.0 * PI);

        if g.iter().chain(&grad_sq).any(|v| !v.is_finite()) {
            return Err(GeometryError::SpectralSolveFailure);
        }
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        for v in &mut g {
            *v -= mean;
        }
        Ok(GreenFields {
            g,
            grad_sq,
            regular_at_pole: regular - mean,
        })
    }
}

/// Jacobi `θ₁(w | τ)` for purely imaginary `τ = i·ratio`.
struct Theta {
    /// `q^{(n+½)²}` with `q = e^{−π·ratio}`.
    weights: Vec<f64>,
}

impl Theta {
    fn new(ratio: f64) -> Self {
        let weights = (0..THETA_TERMS)
            .map(|k| (-PI * ratio * (k as f64 + 0.5).powi(2)).exp())
            .take_while(|w| *w > 0.0)
            .collect();
        Theta { weights }
    }

    /// `(log θ₁(w), θ₁′(w)/θ₁(w))`.
    fn log_and_log_derivative(&self, w: Complex64) -> (Complex64, Complex64) {
        let mut value = Complex64::new(0.0, 0.0);
        let mut deriv = Complex64::new(0.0, 0.0);
        for (k, q) in self.weights.iter().enumerate() {
            let m = (2 * k + 1) as f64;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            value += sign * q * (m * w).sin();
            deriv += sign * q * m * (m * w).cos();
        }
        (value.ln(), deriv / value)
    }

    /// `θ₁′(0)` (the common factor 2 of the series is dropped consistently).
    fn derivative_at_zero(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(k, q)| if k % 2 == 0 { 1.0 } else { -1.0 } * (2 * k + 1) as f64 * q)
            .sum()
    }
}

/// Mean of `log r` over the rectangle `[−a, a] × [−b, b]`.
fn cell_average_log(a: f64, b: f64) -> f64 {
    // ∫_{−b}^{b} log √(x² + y²) dy in closed form, then over x numerically.
    let inner = |x: f64| {
        if x == 0.0 {
            2.0 * b * (b.ln() - 1.0)
        } else {
            b * (x * x + b * b).ln() - 2.0 * b + 2.0 * x * (b / x).atan()
        }
    };
    let total = crate::quadrature::integrate(inner, 0.0, a, 1e-14 * a * b, 200)
        .unwrap_or_else(|f| f.estimate);
    total / (2.0 * a * b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn green_function_has_zero_mean() {
        let gf = GreenFields::compute(64, 1.0, 1.3).unwrap();
        let mean = gf.g.iter().sum::<f64>() / gf.g.len() as f64;
        assert!(mean.abs() < 1e-12, "{mean}");
    }

    #[test]
    fn off_grid_cone_point_is_rejected() {
        let mut spec = TorusSpec::unit(0.5, 64);
        spec.cone_point = [0.5 + 1e-3, 0.5];
        assert!(matches!(
            build_torus_cone(&spec),
            Err(GeometryError::ConePointOffGrid { .. })
        ));
    }

    #[test]
    fn section_norm_peaks_at_one() {
        let g = build_torus_cone(&TorusSpec::unit(0.5, 64)).unwrap();
        let cone = &g.cones()[0];
        let max = cone.norm_sq.iter().cloned().fold(0.0, f64::max);
        assert_eq!(max, 1.0);
        let at_p = cone.norm_sq[g.nearest_cell(0)];
        assert!(at_p < 1e-2 && at_p > 0.0);
    }
}

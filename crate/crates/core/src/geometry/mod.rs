//! Discrete model surfaces carrying the background data of the flow.
//!
//! A [`DiscreteGeometry`] is a cell-based discretization: every field is a
//! vector with one value per cell, and 2-forms are stored as densities
//! against a fixed reference measure `μ` whose cell masses are
//! [`DiscreteGeometry::weights`]. The discrete `∂∂̄` maps functions to such
//! densities and is assembled in flux form, so its output integrates to zero
//! up to round-off on every closed geometry.
//!
//! Curvature conventions (complex dimension one): `∂∂̄f = ½Δf dx∧dy` in a flat
//! chart, `Ric(ω) = Ric(μ) − ∂∂̄ log(ω/μ)` and `∫ Ric = 2πχ`.

mod football;
mod torus;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use football::{build_football, round_sphere};
pub use torus::{build_torus_cone, TorusSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("resolution {got} is below the minimum {min}")]
    ResolutionTooLow { got: usize, min: usize },
    #[error("cone angle β = {0} is outside (0, 1)")]
    InvalidBeta(f64),
    #[error("area {0} must be positive and finite")]
    InvalidArea(f64),
    #[error("periods must be positive and finite")]
    InvalidPeriods,
    #[error("cone point ({x}, {y}) is not a grid node")]
    ConePointOffGrid { x: f64, y: f64 },
    #[error("spectral Green-function solve produced non-finite values")]
    SpectralSolveFailure,
    #[error("volume-form perturbation has {got} values, the grid has {expected}")]
    FieldLength { got: usize, expected: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Football,
    TorusCone,
}

/// Where a cone point sits on the model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeLocation {
    NorthPole,
    SouthPole,
    /// A grid node of the torus, with its chart coordinates.
    Node { index: [usize; 2], coords: [f64; 2] },
}

/// One component `Dᵢ` of the cone divisor with the fields of its section.
#[derive(Clone, Debug)]
pub struct ConePoint {
    pub beta: f64,
    pub location: ConeLocation,
    /// `||Sᵢ||²` per cell.
    pub norm_sq: Vec<f64>,
    /// `log ||Sᵢ||²` per cell, kept separately for accuracy near the point.
    pub log_norm_sq: Vec<f64>,
    /// Density of `√−1 DSᵢ∧\overline{DSᵢ}`.
    pub ds_sq: Vec<f64>,
    /// Density of the bundle curvature `R(||·||ᵢ)`.
    pub curvature: Vec<f64>,
    /// `ω₀`-distance from each cell centre to the point.
    pub distance: Vec<f64>,
    /// Human-readable record of the Hermitian metric chosen.
    pub metric: &'static str,
}

/// The divisor `Σ(1−βᵢ)Dᵢ`.
#[derive(Clone, Debug, Default)]
pub struct ConeDivisor {
    pub points: Vec<ConePoint>,
}

impl ConeDivisor {
    pub fn betas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.beta).collect()
    }

    /// `Σ(1−βᵢ)`, the degree of the divisor in units of a point.
    pub fn weight(&self) -> f64 {
        self.points.iter().map(|p| 1.0 - p.beta).sum()
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Stencil {
    /// Flux form on a 1D radial grid: `(c[j+1](f[j+1]−f[j]) − c[j](f[j]−f[j−1])) / dx[j]`.
    Radial { coef: Vec<f64>, dx: Vec<f64> },
    /// Half the periodic 5-point Laplacian on an `n × n` grid, `x` index fastest.
    Periodic { n: usize, inv_hx2: f64, inv_hy2: f64 },
}

#[derive(Clone, Debug)]
pub struct DiscreteGeometry {
    kind: GeometryKind,
    resolution: usize,
    area0: f64,
    euler: i64,
    weights: Vec<f64>,
    omega0: Vec<f64>,
    volume: Vec<f64>,
    ric_reference: f64,
    ric_volume: Vec<f64>,
    divisor: ConeDivisor,
    stencil: Stencil,
    coords: Vec<[f64; 2]>,
    summary_extra: SummaryExtra,
}

#[derive(Clone, Debug, Default)]
struct SummaryExtra {
    truncation_u: Option<f64>,
    periods: Option<[f64; 2]>,
}

/// What gets recorded about a geometry in run manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometrySummary {
    pub kind: GeometryKind,
    pub resolution: usize,
    pub cells: usize,
    pub area0: f64,
    pub betas: Vec<f64>,
    pub euler_char: i64,
    /// Football only: `|log(||S₀||²/||S_∞||²)|` at the outermost cell centre,
    /// the extent of the equivalent `u = log|z|²` window.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub truncation_u: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub periods: Option<[f64; 2]>,
    pub metrics: Vec<String>,
}

impl DiscreteGeometry {
    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// `[n]` for the football, `[n, n]` for the torus.
    pub fn grid_shape(&self) -> Vec<usize> {
        match &self.stencil {
            Stencil::Radial { .. } => vec![self.len()],
            Stencil::Periodic { n, .. } => vec![*n, *n],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn area0(&self) -> f64 {
        self.area0
    }

    pub fn euler_char(&self) -> i64 {
        self.euler
    }

    /// Cell masses of the reference measure.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Density of the initial smooth metric `ω₀`.
    pub fn omega0(&self) -> &[f64] {
        &self.omega0
    }

    /// Density of the volume form `Ω`.
    pub fn volume(&self) -> &[f64] {
        &self.volume
    }

    /// Density of `Ric(Ω)`.
    pub fn ric_volume(&self) -> &[f64] {
        &self.ric_volume
    }

    /// Density of `Ric(μ)`, constant on both models.
    pub fn ric_reference(&self) -> f64 {
        self.ric_reference
    }

    pub fn divisor(&self) -> &ConeDivisor {
        &self.divisor
    }

    pub fn cones(&self) -> &[ConePoint] {
        &self.divisor.points
    }

    /// Chart coordinates of cell centres: `(θ, x)` on the football with `θ`
    /// the polar angle and `x = ||S₀||²`; `(x, y)` on the torus.
    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    /// `∫ f μ` for a density `f`.
    pub fn integrate(&self, density: &[f64]) -> f64 {
        debug_assert_eq!(density.len(), self.len());
        self.weights.iter().zip(density).map(|(w, f)| w * f).sum()
    }

    /// `∫ f μ` over the cells selected by `mask`.
    pub fn integrate_masked(&self, density: &[f64], mask: &[bool]) -> f64 {
        self.weights
            .iter()
            .zip(density)
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|((w, f), _)| w * f)
            .sum()
    }

    pub fn ddbar(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.ddbar_into(f, &mut out);
        out
    }

    /// Density of the discrete `∂∂̄f`, written into `out`.
    pub fn ddbar_into(&self, f: &[f64], out: &mut [f64]) {
        assert_eq!(f.len(), self.len());
        assert_eq!(out.len(), self.len());
        match &self.stencil {
            Stencil::Radial { coef, dx } => {
                let n = f.len();
                let mut flux_lo = 0.0;
                for j in 0..n {
                    let flux_hi = if j + 1 < n {
                        coef[j + 1] * (f[j + 1] - f[j])
                    } else {
                        0.0
                    };
                    out[j] = (flux_hi - flux_lo) / dx[j];
                    flux_lo = flux_hi;
                }
            }
            Stencil::Periodic { n, inv_hx2, inv_hy2 } => {
                let n = *n;
                let (ax, ay) = (0.5 * inv_hx2, 0.5 * inv_hy2);
                for j in 0..n {
                    let up = if j + 1 == n { 0 } else { j + 1 } * n;
                    let down = if j == 0 { n - 1 } else { j - 1 } * n;
                    let row = j * n;
                    for i in 0..n {
                        let right = if i + 1 == n { 0 } else { i + 1 };
                        let left = if i == 0 { n - 1 } else { i - 1 };
                        let c = f[row + i];
                        out[row + i] = ax * (f[row + right] - 2.0 * c + f[row + left])
                            + ay * (f[up + i] - 2.0 * c + f[down + i]);
                    }
                }
            }
        }
    }

    /// Diagonal magnitude of the `∂∂̄` stencil per cell, equal to the sum of
    /// its off-diagonal magnitudes (used for spectral-radius bounds).
    pub fn ddbar_diag(&self) -> Vec<f64> {
        match &self.stencil {
            Stencil::Radial { coef, dx } => (0..self.len())
                .map(|j| (coef[j] + coef[j + 1]) / dx[j])
                .collect(),
            Stencil::Periodic { inv_hx2, inv_hy2, .. } => vec![inv_hx2 + inv_hy2; self.len()],
        }
    }

    /// The same geometry with `Ω` replaced by `e^f Ω`; `Ric(Ω)` is recomputed
    /// through the discrete operator, so `Ric(e^f Ω) = Ric(Ω) − ∂∂̄f` holds exactly.
    pub fn with_volume_form(&self, f: &[f64]) -> Result<Self, GeometryError> {
        if f.len() != self.len() {
            return Err(GeometryError::FieldLength {
                got: f.len(),
                expected: self.len(),
            });
        }
        let mut g = self.clone();
        g.volume = self.volume.iter().zip(f).map(|(v, f)| v * f.exp()).collect();
        g.ric_volume = ricci_of(&g, &g.volume);
        Ok(g)
    }

    /// Density of `Ric(ω)` for a metric of density `w`.
    pub fn ricci_density(&self, w: &[f64]) -> Vec<f64> {
        ricci_of(self, w)
    }

    /// Gauss curvature `K = Ric(ω)/ω` of a metric of density `w`.
    pub fn gauss_curvature(&self, w: &[f64]) -> Vec<f64> {
        ricci_of(self, w).iter().zip(w).map(|(r, w)| r / w).collect()
    }

    /// Minimum `ω₀`-distance from each cell centre to the cone points.
    pub fn distance_to_divisor(&self) -> Vec<f64> {
        let mut d = vec![f64::INFINITY; self.len()];
        for p in self.cones() {
            for (di, pi) in d.iter_mut().zip(&p.distance) {
                *di = di.min(*pi);
            }
        }
        d
    }

    /// Cells of `K_d`: farther than `d` from every cone point.
    pub fn compact_mask(&self, d: f64) -> Vec<bool> {
        self.distance_to_divisor().iter().map(|&x| x > d).collect()
    }

    /// The cell nearest to cone point `i`.
    pub fn nearest_cell(&self, i: usize) -> usize {
        let dist = &self.cones()[i].distance;
        (0..dist.len())
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
            .unwrap_or(0)
    }

    /// Typical cell size in `ω₀`-distance.
    pub fn cell_size(&self) -> f64 {
        match (&self.stencil, self.summary_extra.periods) {
            (Stencil::Periodic { n, .. }, Some([l1, l2])) => {
                (self.area0 / (l1 * l2)).sqrt() * (l1 / *n as f64).max(l2 / *n as f64)
            }
            _ => (self.area0 / (4.0 * std::f64::consts::PI)).sqrt() * std::f64::consts::PI / self.len() as f64,
        }
    }

    pub fn summary(&self) -> GeometrySummary {
        GeometrySummary {
            kind: self.kind,
            resolution: self.resolution,
            cells: self.len(),
            area0: self.area0,
            betas: self.divisor.betas(),
            euler_char: self.euler,
            truncation_u: self.summary_extra.truncation_u,
            periods: self.summary_extra.periods,
            metrics: self.cones().iter().map(|p| p.metric.to_string()).collect(),
        }
    }
}

fn ricci_of(g: &DiscreteGeometry, density: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = density.iter().map(|v| v.ln()).collect();
    g.ddbar(&logs).iter().map(|d| g.ric_reference - d).collect()
}

fn check_beta(beta: f64) -> Result<(), GeometryError> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(GeometryError::InvalidBeta(beta))
    }
}

fn check_area(area: f64) -> Result<(), GeometryError> {
    if area > 0.0 && area.is_finite() {
        Ok(())
    } else {
        Err(GeometryError::InvalidArea(area))
    }
}

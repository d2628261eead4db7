use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::class_flow::{ClassError, ClassFlowPath, FlowMode};
use crate::geometry::{DiscreteGeometry, GeometryError};
use crate::smoothing::{SmoothingError, SmoothingParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("metric density {value:e} at cell {index} (t = {t}) is not positive")]
    NonpositiveDensity { index: usize, value: f64, t: f64 },
    #[error("{what} is not positive at cell {index}: density {value:e}")]
    NotPositive {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("step size fell below dt_min = {dt_min:e} at t = {t}")]
    StepSizeUnderflow { t: f64, dt_min: f64 },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("state does not match the problem: {0}")]
    StateMismatch(String),
    #[error(transparent)]
    Smoothing(#[from] SmoothingError),
    #[error(transparent)]
    Class(#[from] ClassError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Flow-level parameters shared by every cone point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub mode: FlowMode,
    pub epsilon: f64,
    pub k: f64,
    pub rho: f64,
    /// Radius `d` of the excluded discs around cone points used by the
    /// curvature diagnostics (`K_d`).
    pub exclusion_radius: f64,
}

impl FlowParams {
    pub fn new(mode: FlowMode, epsilon: f64) -> Self {
        FlowParams {
            mode,
            epsilon,
            k: SmoothingParams::DEFAULT_K,
            rho: SmoothingParams::DEFAULT_RHO,
            exclusion_radius: 0.2,
        }
    }

    pub fn with_k(self, k: f64) -> Self {
        FlowParams { k, ..self }
    }

    pub fn with_exclusion_radius(self, exclusion_radius: f64) -> Self {
        FlowParams {
            exclusion_radius,
            ..self
        }
    }
}

/// Solution snapshot. `phidot` is the right-hand side at `(t, phi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub epsilon: f64,
    pub mode: FlowMode,
    pub phi: Vec<f64>,
    pub phidot: Vec<f64>,
    pub positivity_margin: f64,
}

/// Lower bound `ω_{0,ε} ≥ γ ω₀` and the cell where it is attained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub gamma: f64,
    pub index: usize,
}

/// Everything about one ε-regularized flow that does not depend on `φ`.
#[derive(Clone, Debug)]
pub struct FlowProblem {
    geometry: Arc<DiscreteGeometry>,
    params: FlowParams,
    smoothing: Vec<SmoothingParams>,
    path: ClassFlowPath,
    rho_form: Vec<f64>,
    smoothing_form: Vec<f64>,
    chi_sum: Vec<f64>,
    log_source: Vec<f64>,
    omega0_eps: Vec<f64>,
    positivity: PositivityReport,
    stencil_diag: Vec<f64>,
    compact: Vec<bool>,
}

impl FlowProblem {
    pub fn new(geometry: Arc<DiscreteGeometry>, params: FlowParams) -> Result<Self, FlowError> {
        let smoothing = geometry
            .cones()
            .iter()
            .map(|c| SmoothingParams::with_constants(c.beta, params.epsilon, params.k, params.rho))
            .collect::<Result<Vec<_>, _>>()?;
        let path = ClassFlowPath::riemann_surface(
            geometry.area0(),
            geometry.euler_char(),
            &geometry.divisor().betas(),
            params.mode,
        )?;
        let n = geometry.len();

        let mut rho_form: Vec<f64> = geometry.ric_volume().iter().map(|r| -r).collect();
        let mut chi_sum = vec![0.0; n];
        let mut chi_cone = vec![0.0; n];
        let mut log_source: Vec<f64> = geometry.volume().iter().map(|v| -v.ln()).collect();
        let e2 = params.epsilon * params.epsilon;
        for (cone, sp) in geometry.cones().iter().zip(&smoothing) {
            let w = 1.0 - cone.beta;
            let cone0 = sp.with_epsilon(0.0);
            for i in 0..n {
                let s = cone.norm_sq[i];
                rho_form[i] += w * cone.curvature[i];
                chi_sum[i] += params.k * sp.chi(s)?;
                chi_cone[i] += params.k * cone0.chi(s)?;
                log_source[i] += w * (s + e2).ln();
            }
        }
        let smoothing_form = geometry.ddbar(&chi_sum);

        // ω* = ω₀ + k∂∂̄||S||^{2β} must be a metric for the chosen k.
        let star: Vec<f64> = geometry
            .omega0()
            .iter()
            .zip(geometry.ddbar(&chi_cone))
            .map(|(a, b)| a + b)
            .collect();
        if let Some((index, &value)) = star.iter().enumerate().find(|(_, v)| **v <= 0.0) {
            return Err(FlowError::NotPositive {
                what: "initial conical metric ω₀ + k∂∂̄||S||^{2β}",
                index,
                value,
            });
        }
        let omega0_eps: Vec<f64> = geometry
            .omega0()
            .iter()
            .zip(&smoothing_form)
            .map(|(a, b)| a + b)
            .collect();
        let (index, gamma) = omega0_eps
            .iter()
            .zip(geometry.omega0())
            .map(|(a, b)| a / b)
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, r)| if r < acc.1 { (i, r) } else { acc });
        if gamma <= 0.0 {
            return Err(FlowError::NotPositive {
                what: "regularized initial metric ω_{0,ε}",
                index,
                value: omega0_eps[index],
            });
        }
        let stencil_diag = geometry.ddbar_diag();
        let compact = geometry.compact_mask(params.exclusion_radius);
        Ok(FlowProblem {
            geometry,
            params,
            smoothing,
            path,
            rho_form,
            smoothing_form,
            chi_sum,
            log_source,
            omega0_eps,
            positivity: PositivityReport { gamma, index },
            stencil_diag,
            compact,
        })
    }

    pub fn geometry(&self) -> &DiscreteGeometry {
        &self.geometry
    }

    pub fn geometry_arc(&self) -> Arc<DiscreteGeometry> {
        self.geometry.clone()
    }

    pub fn params(&self) -> &FlowParams {
        &self.params
    }

    pub fn mode(&self) -> FlowMode {
        self.params.mode
    }

    pub fn smoothing(&self) -> &[SmoothingParams] {
        &self.smoothing
    }

    pub fn class_path(&self) -> &ClassFlowPath {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.geometry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.geometry.is_empty()
    }

    /// Density of `ρ = −Ric(Ω) + Σ(1−βᵢ)R(||·||ᵢ)`.
    pub fn rho_form(&self) -> &[f64] {
        &self.rho_form
    }

    /// `k Σ χᵢ(ε² + ||Sᵢ||²)`.
    pub fn chi_sum(&self) -> &[f64] {
        &self.chi_sum
    }

    /// Density of `k Σ ∂∂̄χᵢ`.
    pub fn smoothing_form(&self) -> &[f64] {
        &self.smoothing_form
    }

    /// `Σ(1−βᵢ) log(||Sᵢ||² + ε²) − log Ω`.
    pub fn log_source(&self) -> &[f64] {
        &self.log_source
    }

    /// Density of `ω_{0,ε} = ω₀ + k Σ ∂∂̄χᵢ`.
    pub fn omega0_eps(&self) -> &[f64] {
        &self.omega0_eps
    }

    pub fn positivity(&self) -> PositivityReport {
        self.positivity
    }

    /// Cells of `K_d` for the configured exclusion radius.
    pub fn compact_mask(&self) -> &[bool] {
        &self.compact
    }

    /// `(α(t), γ(t))` in `ω_t = α ω₀ + γ ρ`.
    pub fn class_coefficients(&self, t: f64) -> (f64, f64) {
        match self.params.mode {
            FlowMode::Unnormalized => (1.0, t),
            FlowMode::Normalized => ((-t).exp(), -(-t).exp_m1()),
        }
    }

    fn background_into(&self, t: f64, out: &mut [f64]) {
        let (a, g) = self.class_coefficients(t);
        let om = self.geometry.omega0();
        for i in 0..out.len() {
            out[i] = a * om[i] + g * self.rho_form[i] + self.smoothing_form[i];
        }
    }

    /// Density of `ω_{t,ε}`, required to be positive at every cell.
    pub fn regularized_background_density(&self, t: f64) -> Result<Vec<f64>, FlowError> {
        let mut out = vec![0.0; self.len()];
        self.background_into(t, &mut out);
        if let Some((index, &value)) = out.iter().enumerate().find(|(_, v)| **v <= 0.0) {
            return Err(FlowError::NotPositive {
                what: "regularized background ω_{t,ε}",
                index,
                value,
            });
        }
        Ok(out)
    }

    /// Density of `ω_{t,ε} + ∂∂̄φ`, written into `w`; returns the minimum.
    pub fn metric_density_into(&self, t: f64, phi: &[f64], w: &mut [f64]) -> f64 {
        self.geometry.ddbar_into(phi, w);
        let (a, g) = self.class_coefficients(t);
        let om = self.geometry.omega0();
        let mut min = f64::INFINITY;
        for i in 0..w.len() {
            w[i] += a * om[i] + g * self.rho_form[i] + self.smoothing_form[i];
            min = min.min(w[i]);
        }
        min
    }

    pub fn metric_density(&self, t: f64, phi: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.len()];
        self.metric_density_into(t, phi, &mut w);
        w
    }

    /// Right-hand side `∂φ/∂t` at `(t, φ)`. `w` receives the metric density;
    /// the return value is the positivity margin `min w`.
    pub fn rhs_into(&self, t: f64, phi: &[f64], out: &mut [f64], w: &mut [f64]) -> Result<f64, FlowError> {
        let margin = self.metric_density_into(t, phi, w);
        if !(margin > 0.0) {
            let index = w
                .iter()
                .position(|v| !(*v > 0.0))
                .unwrap_or_default();
            return Err(FlowError::NonpositiveDensity {
                index,
                value: w[index],
                t,
            });
        }
        match self.params.mode {
            FlowMode::Unnormalized => {
                for i in 0..out.len() {
                    out[i] = w[i].ln() + self.log_source[i];
                }
            }
            FlowMode::Normalized => {
                for i in 0..out.len() {
                    out[i] = w[i].ln() + self.log_source[i] - phi[i] - self.chi_sum[i];
                }
            }
        }
        Ok(margin)
    }

    pub fn rhs(&self, t: f64, phi: &[f64]) -> Result<Vec<f64>, FlowError> {
        let mut out = vec![0.0; self.len()];
        let mut w = vec![0.0; self.len()];
        self.rhs_into(t, phi, &mut out, &mut w)?;
        Ok(out)
    }

    /// Gershgorin bound on the spectral radius of the linearized right-hand
    /// side, `(1/w)∂∂̄` (minus the identity for the normalized flow).
    pub fn spectral_radius(&self, w: &[f64]) -> f64 {
        let lin = self
            .stencil_diag
            .iter()
            .zip(w)
            .map(|(d, w)| 2.0 * d / w)
            .fold(0.0, f64::max);
        match self.params.mode {
            FlowMode::Unnormalized => lin,
            FlowMode::Normalized => lin + 1.0,
        }
    }

    /// State at `t` with potential `phi`; `phidot` is evaluated.
    pub fn state(&self, t: f64, phi: Vec<f64>) -> Result<FlowState, FlowError> {
        if phi.len() != self.len() {
            return Err(FlowError::StateMismatch(format!(
                "potential has {} values, grid has {}",
                phi.len(),
                self.len()
            )));
        }
        let mut phidot = vec![0.0; self.len()];
        let mut w = vec![0.0; self.len()];
        let margin = self.rhs_into(t, &phi, &mut phidot, &mut w)?;
        Ok(FlowState {
            t,
            epsilon: self.params.epsilon,
            mode: self.params.mode,
            phi,
            phidot,
            positivity_margin: margin,
        })
    }

    /// `φ(·, 0) = 0`.
    pub fn initial_state(&self) -> Result<FlowState, FlowError> {
        self.state(0.0, vec![0.0; self.len()])
    }
}

//! Runtime monitors for the a priori estimates and limit identities.
//!
//! Every monitor is a pure function of `(problem, t, φ)`: re-evaluating a
//! saved checkpoint reproduces its [`DiagnosticsRecord`] bit for bit.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::class_flow::FlowMode;
use crate::flow::{run, FlowError, FlowParams, FlowProblem, FlowState, LadderResult, Outcome, SolverConfig, Trajectory};
use crate::geometry::{DiscreteGeometry, GeometryKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("state is not stationary: sup|φ̇| = {sup_phidot:e} exceeds {tol:e}")]
    NotStationary { sup_phidot: f64, tol: f64 },
    #[error("the Kähler–Einstein residual is defined for normalized runs only")]
    ModeMismatch,
    #[error("need at least {need} ladder rungs, got {got}")]
    TooFewRungs { need: usize, got: usize },
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Monitor values for one accepted step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// Size of the step that produced this state (0 for the initial state).
    pub dt: f64,
    pub sup_phi: f64,
    pub inf_phi: f64,
    pub sup_phidot: f64,
    pub inf_phidot: f64,
    /// Extremes of the density ratio `ω / ω_{0,ε}`.
    pub trace_upper: f64,
    pub trace_lower: f64,
    pub area: f64,
    pub class_area: f64,
    /// `|area − class_area| / class_area`.
    pub class_defect: f64,
    /// `sup_{K_d} |K + 1|`, normalized runs only.
    pub ke_residual_sup: Option<f64>,
    pub curvature_min: f64,
    pub curvature_max: f64,
    pub gauss_bonnet_defect: f64,
    pub positivity_margin: f64,
}

impl DiagnosticsRecord {
    /// Evaluates every monitor; `w` must be the metric density at `(t, φ)`.
    pub fn evaluate(problem: &FlowProblem, t: f64, dt: f64, phi: &[f64], phidot: &[f64], w: &[f64]) -> Self {
        let g = problem.geometry();
        let (inf_phi, sup_phi) = extremes(phi.iter().copied());
        let (inf_phidot, sup_phidot) = extremes(phidot.iter().copied());
        let (trace_lower, trace_upper) = extremes(w.iter().zip(problem.omega0_eps()).map(|(a, b)| a / b));
        let area = g.integrate(w);
        let class_area = problem.class_path().area_at(t);
        let ric = g.ricci_density(w);
        let mask = problem.compact_mask();
        let (curvature_min, curvature_max) = extremes(
            ric.iter()
                .zip(w)
                .zip(mask)
                .filter(|(_, &m)| m)
                .map(|((r, w), _)| r / w),
        );
        let ke_residual_sup = (problem.mode() == FlowMode::Normalized).then(|| {
            ric.iter()
                .zip(w)
                .zip(mask)
                .filter(|(_, &m)| m)
                .map(|((r, w), _)| (r / w + 1.0).abs())
                .fold(0.0, f64::max)
        });
        DiagnosticsRecord {
            t,
            dt,
            sup_phi,
            inf_phi,
            sup_phidot,
            inf_phidot,
            trace_upper,
            trace_lower,
            area,
            class_area,
            class_defect: (area - class_area).abs() / class_area.abs(),
            ke_residual_sup,
            curvature_min,
            curvature_max,
            gauss_bonnet_defect: cone_defect(g, w, &ric, problem.params().exclusion_radius),
            positivity_margin: w.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    /// Re-derives the record of a saved state.
    pub fn from_state(problem: &FlowProblem, state: &FlowState, dt: f64) -> Self {
        let w = problem.metric_density(state.t, &state.phi);
        Self::evaluate(problem, state.t, dt, &state.phi, &state.phidot, &w)
    }

    /// `A = max(trace_upper, 1/trace_lower)`.
    pub fn trace_constant(&self) -> f64 {
        self.trace_upper.max(1.0 / self.trace_lower)
    }

    pub fn sup_abs_phi(&self) -> f64 {
        self.sup_phi.abs().max(self.inf_phi.abs())
    }

    pub fn sup_abs_phidot(&self) -> f64 {
        self.sup_phidot.abs().max(self.inf_phidot.abs())
    }

    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.sup_phi,
            self.inf_phi,
            self.sup_phidot,
            self.inf_phidot,
            self.trace_upper,
            self.trace_lower,
            self.area,
            self.class_area,
            self.curvature_min,
            self.curvature_max,
            self.gauss_bonnet_defect,
            self.positivity_margin,
        ]
        .iter()
        .chain(self.ke_residual_sup.iter())
        .all(|v| v.is_finite())
    }
}

fn extremes(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// `|∫_{K_d} Ric + Σᵢ Dᵢ − 2πχ(M)|`, where `Dᵢ` is the model estimate of the
/// curvature inside the excised disc around cone point `i`: the angle defect
/// `2π(1−βᵢ)` plus the disc area times the mean curvature on the ring of
/// width two cells just outside it.
fn cone_defect(g: &DiscreteGeometry, w: &[f64], ric: &[f64], d: f64) -> f64 {
    let mask = g.compact_mask(d);
    let ring_width = 2.0 * g.cell_size();
    let mut discs = 0.0;
    for cone in g.cones() {
        let (mut area, mut ring_ric, mut ring_area) = (0.0, 0.0, 0.0);
        for (i, &dist) in cone.distance.iter().enumerate() {
            let wt = g.weights()[i];
            if dist <= d {
                area += wt * w[i];
            } else if dist <= d + ring_width {
                ring_ric += wt * ric[i];
                ring_area += wt * w[i];
            }
        }
        let k_ring = if ring_area > 0.0 { ring_ric / ring_area } else { 0.0 };
        discs += 2.0 * PI * (1.0 - cone.beta) + k_ring * area;
    }
    (g.integrate_masked(ric, &mask) + discs - 2.0 * PI * g.euler_char() as f64).abs()
}

/// `(min, max)` of `ω / ω_{0,ε}` over the grid.
pub fn trace_monitor(problem: &FlowProblem, state: &FlowState) -> (f64, f64) {
    let w = problem.metric_density(state.t, &state.phi);
    extremes(w.iter().zip(problem.omega0_eps()).map(|(a, b)| a / b))
}

/// Gauss–Bonnet check on `K_d` for an arbitrary exclusion radius `d`.
pub fn gauss_bonnet_cone_check(problem: &FlowProblem, state: &FlowState, d: f64) -> f64 {
    let g = problem.geometry();
    let w = problem.metric_density(state.t, &state.phi);
    cone_defect(g, &w, &g.ricci_density(&w), d)
}

/// `sup_{K_d} |K + 1|` of a stationary normalized state.
pub fn ke_residual(problem: &FlowProblem, state: &FlowState, d: f64, tol_stationary: f64) -> Result<f64, DiagnosticsError> {
    if problem.mode() != FlowMode::Normalized {
        return Err(DiagnosticsError::ModeMismatch);
    }
    let sup_phidot = state.phidot.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(sup_phidot <= tol_stationary) {
        return Err(DiagnosticsError::NotStationary {
            sup_phidot,
            tol: tol_stationary,
        });
    }
    let g = problem.geometry();
    let w = problem.metric_density(state.t, &state.phi);
    Ok(curvature_residual(g, &w, &g.compact_mask(d)))
}

/// `sup_mask |K(w) + 1|` for any positive density field.
pub fn curvature_residual(g: &DiscreteGeometry, w: &[f64], mask: &[bool]) -> f64 {
    g.gauss_curvature(w)
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(k, _)| (k + 1.0).abs())
        .fold(0.0, f64::max)
}

/// Empirical estimate constants of one ladder rung.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RungConstants {
    pub epsilon: f64,
    /// `sup_t sup |φ|`.
    pub c0: f64,
    /// `sup_t sup |φ̇|`.
    pub phidot: f64,
    /// `sup_t A(t)` with `A^{-1} ω_{0,ε} ≤ ω ≤ A ω_{0,ε}`.
    pub trace: f64,
    /// Smallest `C` with `φ̇ ≤ 1 + C/t` on the records with `t ≥ t_fit`.
    pub phidot_shape: f64,
    /// `−inf_t inf φ̇`, the lower bound `C_δ`.
    pub phidot_lower: f64,
}

impl RungConstants {
    pub fn from_trajectory(traj: &Trajectory, t_fit: f64) -> Self {
        let recs = &traj.records;
        let max_of = |f: &dyn Fn(&DiagnosticsRecord) -> f64| recs.iter().map(f).fold(0.0, f64::max);
        RungConstants {
            epsilon: traj.epsilon,
            c0: max_of(&|r| r.sup_abs_phi()),
            phidot: max_of(&|r| r.sup_abs_phidot()),
            trace: max_of(&|r| r.trace_constant()),
            phidot_shape: recs
                .iter()
                .filter(|r| r.t >= t_fit)
                .map(|r| r.t * (r.sup_phidot - 1.0))
                .fold(0.0, f64::max),
            phidot_lower: max_of(&|r| -r.inf_phidot),
        }
    }
}

/// Uniformity of the estimate constants across an ε ladder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub rungs: Vec<RungConstants>,
    /// `(max − min)/max` across the ladder for each constant.
    pub spread_c0: f64,
    pub spread_phidot: f64,
    pub spread_trace: f64,
    /// Constants whose ladder maximum exceeds twice the coarsest-ε value.
    pub violations: Vec<String>,
}

impl UniformityReport {
    pub fn max_spread(&self) -> f64 {
        self.spread_c0.max(self.spread_phidot).max(self.spread_trace)
    }
}

/// C⁰, φ̇ and trace constants across the ladder.
pub fn c0_and_phidot_monitor(ladder: &LadderResult, t_fit: f64) -> Result<UniformityReport, DiagnosticsError> {
    if ladder.rungs.len() < 2 {
        return Err(DiagnosticsError::TooFewRungs {
            need: 2,
            got: ladder.rungs.len(),
        });
    }
    let rungs: Vec<RungConstants> = ladder
        .rungs
        .iter()
        .map(|r| RungConstants::from_trajectory(&r.trajectory, t_fit))
        .collect();
    let spread = |f: fn(&RungConstants) -> f64| {
        let (lo, hi) = extremes(rungs.iter().map(f));
        if hi > 0.0 {
            (hi - lo) / hi
        } else {
            0.0
        }
    };
    let mut violations = Vec::new();
    let named: [(&str, fn(&RungConstants) -> f64); 3] = [
        ("c0", |r| r.c0),
        ("phidot", |r| r.phidot),
        ("trace", |r| r.trace),
    ];
    for (name, f) in named {
        let coarse = f(&rungs[0]);
        let top = rungs.iter().map(f).fold(0.0, f64::max);
        if top > 2.0 * coarse {
            violations.push(format!("{name}: ladder maximum {top:.4e} exceeds twice the coarsest value {coarse:.4e}"));
        }
    }
    Ok(UniformityReport {
        spread_c0: spread(|r| r.c0),
        spread_phidot: spread(|r| r.phidot),
        spread_trace: spread(|r| r.trace),
        rungs,
        violations,
    })
}

/// A smooth bump supported away from the cone points, scaled by `amplitude`:
/// around the equator of the football, around the corner of the torus chart.
pub fn smooth_bump(g: &DiscreteGeometry, amplitude: f64) -> Vec<f64> {
    let profile = |r: f64| if r.abs() < 1.0 { (1.0 - 1.0 / (1.0 - r * r)).exp() } else { 0.0 };
    match g.kind() {
        GeometryKind::Football => g
            .coords()
            .iter()
            .map(|c| amplitude * profile((c[0] - PI / 2.0) / (PI / 3.0)))
            .collect(),
        GeometryKind::TorusCone => {
            let [l1, l2] = g.summary().periods.unwrap_or([1.0, 1.0]);
            let radius = 0.25 * l1.min(l2);
            g.coords()
                .iter()
                .map(|c| {
                    // Periodic distance to the chart origin.
                    let dx = c[0].min(l1 - c[0]);
                    let dy = c[1].min(l2 - c[1]);
                    amplitude * profile((dx * dx + dy * dy).sqrt() / radius)
                })
                .collect()
        }
    }
}

fn sup_on(a: &[f64], b: &[f64], mask: Option<&[bool]>) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .filter(|(i, _)| mask.map_or(true, |m| m[*i]))
        .map(|(_, (x, y))| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Result of the volume-form shift experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub times: Vec<f64>,
    /// `sup |φ' + t f − φ|` at each time, over the whole grid.
    pub sup_diff: Vec<f64>,
    /// Worst volume-class defect over both runs.
    pub max_class_defect: f64,
}

/// Solves with `Ω` and with `e^f Ω` and compares `φ` with `φ' + t f` at every
/// checkpoint of `config`.
pub fn omega_shift_test(
    geometry: Arc<DiscreteGeometry>,
    params: FlowParams,
    config: &SolverConfig,
    f: &[f64],
) -> Result<ShiftReport, DiagnosticsError> {
    let shifted = Arc::new(geometry.with_volume_form(f).map_err(FlowError::from)?);
    let base = run(&FlowProblem::new(geometry, params)?, config)?;
    let other = run(&FlowProblem::new(shifted, params)?, config)?;
    let mut times = Vec::new();
    let mut sup_diff = Vec::new();
    for cp in &base.checkpoints {
        let t = cp.state.t;
        if let Some(o) = other.checkpoint_at(t) {
            let corrected: Vec<f64> = o.state.phi.iter().zip(f).map(|(p, f)| p + t * f).collect();
            times.push(t);
            sup_diff.push(sup_on(&corrected, &cp.state.phi, None));
        }
    }
    Ok(ShiftReport {
        times,
        sup_diff,
        max_class_defect: base.max_class_defect.max(other.max_class_defect),
    })
}

/// Result of the initial-metric independence experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KIndependenceReport {
    pub k: f64,
    pub k_prime: f64,
    pub outcomes: [Outcome; 2],
    /// `sup_{K_d} |(φ_∞ + kχ) − (φ'_∞ + k'χ)|`.
    pub sup_diff: f64,
    pub max_class_defect: f64,
}

/// Runs the normalized flow from `ω₀ + k∂∂̄χ` and from `ω₀ + k'∂∂̄χ` and
/// compares the limits of `φ + kχ`.
pub fn initial_metric_independence(
    geometry: Arc<DiscreteGeometry>,
    params: FlowParams,
    k_prime: f64,
    config: &SolverConfig,
    d: f64,
) -> Result<KIndependenceReport, DiagnosticsError> {
    if params.mode != FlowMode::Normalized {
        return Err(DiagnosticsError::ModeMismatch);
    }
    let mask = geometry.compact_mask(d);
    let mut limits = Vec::new();
    let mut outcomes = Vec::new();
    let mut max_class_defect = 0.0f64;
    for k in [params.k, k_prime] {
        let p = FlowProblem::new(geometry.clone(), params.with_k(k))?;
        let traj = run(&p, config)?;
        let u: Vec<f64> = traj.final_state().phi.iter().zip(p.chi_sum()).map(|(a, b)| a + b).collect();
        limits.push(u);
        outcomes.push(traj.outcome);
        max_class_defect = max_class_defect.max(traj.max_class_defect);
    }
    Ok(KIndependenceReport {
        k: params.k,
        k_prime,
        outcomes: [outcomes[0], outcomes[1]],
        sup_diff: sup_on(&limits[0], &limits[1], Some(&mask)),
        max_class_defect,
    })
}

/// Result of the normalized/unnormalized comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub s: Vec<f64>,
    /// `sup_{K_d} |ω_unnorm(s) − (1+s) ω_norm(log(1+s))|` in density units.
    pub sup_density_diff: Vec<f64>,
    pub max_class_defect: f64,
}

/// Runs both flows with the same `ε` and `k` and compares the metrics under
/// `ω̃(s) = (1+s) ω(log(1+s))`.
pub fn scaling_correspondence(
    geometry: Arc<DiscreteGeometry>,
    params: FlowParams,
    config: &SolverConfig,
    s_values: &[f64],
    d: f64,
) -> Result<ScalingReport, DiagnosticsError> {
    let s_max = s_values.iter().copied().fold(0.0, f64::max);
    let unnorm = FlowProblem::new(geometry.clone(), FlowParams { mode: FlowMode::Unnormalized, ..params })?;
    let norm = FlowProblem::new(geometry.clone(), FlowParams { mode: FlowMode::Normalized, ..params })?;
    let cu = SolverConfig {
        t_end: s_max,
        checkpoints: s_values.to_vec(),
        tol_stationary: None,
        ..config.clone()
    };
    let cn = SolverConfig {
        t_end: s_max.ln_1p(),
        checkpoints: s_values.iter().map(|s| s.ln_1p()).collect(),
        tol_stationary: None,
        ..config.clone()
    };
    let a = run(&unnorm, &cu)?;
    let b = run(&norm, &cn)?;
    let mask = geometry.compact_mask(d);
    let mut sup_density_diff = Vec::new();
    for &s in s_values {
        let (Some(x), Some(y)) = (a.checkpoint_at(s), b.checkpoint_at(s.ln_1p())) else {
            return Err(FlowError::InvalidConfig(format!("no checkpoint at s = {s}")).into());
        };
        let wa = unnorm.metric_density(x.state.t, &x.state.phi);
        let wb: Vec<f64> = norm
            .metric_density(y.state.t, &y.state.phi)
            .iter()
            .map(|w| (1.0 + s) * w)
            .collect();
        sup_density_diff.push(sup_on(&wa, &wb, Some(&mask)));
    }
    Ok(ScalingReport {
        s: s_values.to_vec(),
        sup_density_diff,
        max_class_defect: a.max_class_defect.max(b.max_class_defect),
    })
}

/// What [`independence_tests`] should run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndependencePlan {
    /// Volume-form shift `f`; skipped when absent.
    pub shift: Option<Vec<f64>>,
    /// Second smoothing constant `k'`; normalized runs only.
    pub k_prime: Option<f64>,
    pub exclusion_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndependenceReport {
    pub shift: Option<ShiftReport>,
    pub initial_metric: Option<KIndependenceReport>,
}

/// Runs the paired experiments requested by `plan`.
pub fn independence_tests(
    geometry: Arc<DiscreteGeometry>,
    params: FlowParams,
    config: &SolverConfig,
    plan: &IndependencePlan,
) -> Result<IndependenceReport, DiagnosticsError> {
    let shift = match &plan.shift {
        Some(f) => Some(omega_shift_test(geometry.clone(), params, config, f)?),
        None => None,
    };
    let initial_metric = match plan.k_prime {
        Some(kp) if params.mode == FlowMode::Normalized => Some(initial_metric_independence(
            geometry,
            params,
            kp,
            config,
            plan.exclusion_radius,
        )?),
        _ => None,
    };
    Ok(IndependenceReport { shift, initial_metric })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extremes_of_empty_input_are_infinite() {
        assert_eq!(extremes(std::iter::empty()), (f64::INFINITY, f64::NEG_INFINITY));
        assert_eq!(extremes([2.0, -1.0, 0.5].into_iter()), (-1.0, 2.0));
    }
}

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::problem::{FlowError, FlowParams, FlowProblem, FlowState};
use super::stepper::{Integrator, StepMethod, StepResult};
use crate::class_flow::FlowMode;
use crate::diagnostics::DiagnosticsRecord;
use crate::geometry::DiscreteGeometry;

/// Time-stepping controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: StepMethod,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// A trial step whose positivity margin drops below `safety` times the
    /// previous margin is retried with half the step.
    pub safety: f64,
    pub tol_step: f64,
    pub t_end: f64,
    /// Normalized runs stop once `sup|φ̇|` falls below this.
    pub tol_stationary: Option<f64>,
    /// Extra output times in `(0, t_end]`.
    pub checkpoints: Vec<f64>,
    pub epsilon_ladder: Vec<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: StepMethod::Bs23,
            dt_init: 1e-4,
            dt_min: 1e-9,
            dt_max: 0.05,
            safety: 0.5,
            tol_step: 1e-6,
            t_end: 1.0,
            tol_stationary: None,
            checkpoints: Vec::new(),
            epsilon_ladder: vec![0.2, 0.1, 0.05],
        }
    }
}

impl SolverConfig {
    /// Every violated constraint as `(field, message)`.
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.dt_min) {
            out.push(("dt_min", format!("must be positive, got {}", self.dt_min)));
        }
        if !(self.dt_min < self.dt_init && self.dt_init <= self.dt_max) || !self.dt_max.is_finite() {
            out.push((
                "dt_init",
                format!(
                    "need dt_min < dt_init <= dt_max, got {} / {} / {}",
                    self.dt_min, self.dt_init, self.dt_max
                ),
            ));
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            out.push(("safety", format!("must lie in (0, 1), got {}", self.safety)));
        }
        if !pos(self.tol_step) {
            out.push(("tol_step", format!("must be positive, got {}", self.tol_step)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            out.push(("t_end", format!("must be finite and non-negative, got {}", self.t_end)));
        }
        if let Some(tol) = self.tol_stationary {
            if !pos(tol) {
                out.push(("tol_stationary", format!("must be positive, got {tol}")));
            }
        }
        if self.checkpoints.iter().any(|&c| !(c > 0.0 && c <= self.t_end)) {
            out.push(("checkpoints", "every checkpoint must lie in (0, t_end]".to_string()));
        }
        if self.epsilon_ladder.is_empty() {
            out.push(("epsilon_ladder", "ladder is empty".to_string()));
        }
        if self.epsilon_ladder.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            out.push(("epsilon_ladder", "ladder values must be positive".to_string()));
        }
        if self.epsilon_ladder.windows(2).any(|w| w[1] >= w[0]) {
            out.push(("epsilon_ladder", "ladder not decreasing".to_string()));
        }
        out
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        match self.problems().first() {
            None => Ok(()),
            Some((field, msg)) => Err(FlowError::InvalidConfig(format!("{field}: {msg}"))),
        }
    }
}

/// Why a run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Outcome {
    Completed { t: f64 },
    Stationary { t: f64, sup_phidot: f64 },
    /// The step size underflowed while the metric collapsed; `t_num` is the
    /// last accepted time.
    Extinction { t_num: f64, margin: f64 },
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Completed { .. } => "completed",
            Outcome::Stationary { .. } => "stationary",
            Outcome::Extinction { .. } => "extinction",
        }
    }

    pub fn final_time(&self) -> f64 {
        match *self {
            Outcome::Completed { t } | Outcome::Stationary { t, .. } => t,
            Outcome::Extinction { t_num, .. } => t_num,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub state: FlowState,
    pub record: DiagnosticsRecord,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub epsilon: f64,
    pub mode: FlowMode,
    /// One record per accepted step, starting with the initial state.
    pub records: Vec<DiagnosticsRecord>,
    /// The initial state, each requested time and the final state.
    pub checkpoints: Vec<Checkpoint>,
    pub outcome: Outcome,
    pub accepted: usize,
    pub rejected: usize,
    pub max_class_defect: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &FlowState {
        &self.checkpoints.last().expect("a trajectory always has a checkpoint").state
    }

    pub fn checkpoint_at(&self, t: f64) -> Option<&Checkpoint> {
        self.checkpoints.iter().find(|c| c.state.t == t)
    }
}

/// The metric counts as collapsed when the margin has fallen below this
/// fraction of its initial value.
const COLLAPSE_FRACTION: f64 = 1e-2;

/// Integrates from `φ = 0` at `t = 0`.
pub fn run(problem: &FlowProblem, config: &SolverConfig) -> Result<Trajectory, FlowError> {
    run_from(problem, config, problem.initial_state()?, config.t_end)
}

/// Integrates from `initial` up to `t_end`, recording every accepted step.
pub fn run_from(
    problem: &FlowProblem,
    config: &SolverConfig,
    initial: FlowState,
    t_end: f64,
) -> Result<Trajectory, FlowError> {
    config.validate()?;
    if initial.phi.len() != problem.len() {
        return Err(FlowError::StateMismatch(format!(
            "initial potential has {} values, grid has {}",
            initial.phi.len(),
            problem.len()
        )));
    }
    let t0 = initial.t;
    let mut stops: Vec<f64> = config
        .checkpoints
        .iter()
        .copied()
        .filter(|&c| c > t0 && c < t_end)
        .collect();
    stops.push(t_end);
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    let mut integ = Integrator::new(problem, config.method, config.tol_step, config.safety, t0, initial.phi)?;
    let initial_margin = integ.margin;
    let snapshot = |integ: &Integrator, dt: f64| -> Checkpoint {
        let state = FlowState {
            t: integ.t,
            epsilon: problem.params().epsilon,
            mode: problem.mode(),
            phi: integ.y.clone(),
            phidot: integ.f.clone(),
            positivity_margin: integ.margin,
        };
        let record = DiagnosticsRecord::evaluate(problem, integ.t, dt, &integ.y, &integ.f, &integ.w);
        Checkpoint { state, record }
    };

    let first = snapshot(&integ, 0.0);
    let mut records = vec![first.record.clone()];
    let mut checkpoints = vec![first];
    let mut accepted = 0;
    let mut rejected = 0;
    let mut dt = config.dt_init;
    let mut outcome = None;

    if let Some(o) = stationary(problem, config, &integ) {
        outcome = Some(o);
    }
    let mut next_stop = 0;
    while outcome.is_none() && next_stop < stops.len() {
        let target = stops[next_stop];
        if integ.t >= target {
            next_stop += 1;
            continue;
        }
        dt = dt.min(integ.stable_dt());
        let remaining = target - integ.t;
        // Land exactly on the stop; avoid a sliver step just before it.
        let (h, lands) = if dt >= remaining {
            (remaining, true)
        } else if dt > 0.5 * remaining {
            (0.5 * remaining, false)
        } else {
            (dt, false)
        };
        if h < config.dt_min {
            if integ.margin < COLLAPSE_FRACTION * initial_margin {
                outcome = Some(Outcome::Extinction {
                    t_num: integ.t,
                    margin: integ.margin,
                });
                break;
            }
            if !lands {
                return Err(FlowError::StepSizeUnderflow {
                    t: integ.t,
                    dt_min: config.dt_min,
                });
            }
        }
        let t_new = if lands { target } else { integ.t + h };
        match integ.try_step(t_new)? {
            StepResult::Accepted { dt_next, .. } => {
                accepted += 1;
                let cp = snapshot(&integ, h);
                records.push(cp.record.clone());
                if lands {
                    checkpoints.push(cp);
                    next_stop += 1;
                    // A step clipped to land on a stop says little about the next one.
                    dt = dt.max(dt_next).min(config.dt_max);
                } else {
                    dt = dt_next.min(config.dt_max);
                }
                if let Some(o) = stationary(problem, config, &integ) {
                    outcome = Some(o);
                }
            }
            StepResult::Rejected { dt_next, .. } => {
                rejected += 1;
                dt = dt_next.min(0.5 * h).max(0.1 * h);
            }
            StepResult::PositivityRetry => {
                rejected += 1;
                dt = 0.5 * h;
            }
        }
    }

    let outcome = outcome.unwrap_or(Outcome::Completed { t: integ.t });
    if checkpoints.last().map(|c| c.state.t) != Some(integ.t) {
        let dt_last = records.last().map(|r| r.dt).unwrap_or(0.0);
        checkpoints.push(snapshot(&integ, dt_last));
    }
    let max_class_defect = records.iter().map(|r| r.class_defect).fold(0.0, f64::max);
    Ok(Trajectory {
        epsilon: problem.params().epsilon,
        mode: problem.mode(),
        records,
        checkpoints,
        outcome,
        accepted,
        rejected,
        max_class_defect,
    })
}

fn stationary(problem: &FlowProblem, config: &SolverConfig, integ: &Integrator) -> Option<Outcome> {
    let tol = config.tol_stationary?;
    if problem.mode() != FlowMode::Normalized {
        return None;
    }
    let sup = integ.f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (sup < tol).then_some(Outcome::Stationary {
        t: integ.t,
        sup_phidot: sup,
    })
}

/// How each rung of the ε ladder is initialized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LadderStart {
    /// Every rung starts from `φ = 0` at `t = 0`.
    #[default]
    Cold,
    /// Normalized runs only: rung `i` starts where rung `i−1` stopped, with
    /// `φ + kχ` carried over.
    Warm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LadderRung {
    pub epsilon: f64,
    pub trajectory: Trajectory,
}

/// Sup-differences between the final potentials of consecutive rungs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauchyEntry {
    pub coarse: f64,
    pub fine: f64,
    /// `sup_{K_0.1} |φ_fine − φ_coarse|`.
    pub sup_k01: f64,
    /// `sup_{K_0.2} |φ_fine − φ_coarse|`.
    pub sup_k02: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LadderResult {
    pub start: LadderStart,
    pub rungs: Vec<LadderRung>,
    pub cauchy: Vec<CauchyEntry>,
    /// Set when some sup-difference on `K_0.2` fails to decrease.
    pub non_cauchy: bool,
}

impl LadderResult {
    /// The finest-ε trajectory, the surrogate for the conic limit.
    pub fn finest(&self) -> &Trajectory {
        &self.rungs.last().expect("ladder has at least one rung").trajectory
    }

    /// Ratios of successive `K_0.2` differences.
    pub fn ratios(&self) -> Vec<f64> {
        self.cauchy.windows(2).map(|w| w[0].sup_k02 / w[1].sup_k02).collect()
    }
}

/// Runs the flow once per ε in `config.epsilon_ladder` and tabulates the
/// sup-differences of consecutive final potentials on `K_0.1` and `K_0.2`.
/// Cold rungs are independent and run on up to `threads` threads.
pub fn epsilon_continuation(
    geometry: Arc<DiscreteGeometry>,
    params: FlowParams,
    config: &SolverConfig,
    start: LadderStart,
    threads: usize,
) -> Result<LadderResult, FlowError> {
    config.validate()?;
    if start == LadderStart::Warm && params.mode != FlowMode::Normalized {
        return Err(FlowError::InvalidConfig(
            "warm ladder starts are defined for normalized runs only".to_string(),
        ));
    }
    let problems = config
        .epsilon_ladder
        .iter()
        .map(|&eps| FlowProblem::new(geometry.clone(), FlowParams { epsilon: eps, ..params }))
        .collect::<Result<Vec<_>, _>>()?;

    let trajectories: Vec<Trajectory> = match start {
        LadderStart::Cold => run_cold(&problems, config, threads.max(1))?,
        LadderStart::Warm => {
            let mut out: Vec<Trajectory> = Vec::with_capacity(problems.len());
            for (i, p) in problems.iter().enumerate() {
                let traj = if i == 0 {
                    run(p, config)?
                } else {
                    let prev = out[i - 1].final_state();
                    let prev_chi = problems[i - 1].chi_sum();
                    let phi: Vec<f64> = prev
                        .phi
                        .iter()
                        .zip(prev_chi)
                        .zip(p.chi_sum())
                        .map(|((f, a), b)| f + a - b)
                        .collect();
                    let t0 = prev.t;
                    run_from(p, config, p.state(t0, phi)?, t0 + config.t_end)?
                };
                out.push(traj);
            }
            out
        }
    };

    let masks = [geometry.compact_mask(0.1), geometry.compact_mask(0.2)];
    let sup_diff = |a: &[f64], b: &[f64], mask: &[bool]| {
        a.iter()
            .zip(b)
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|((x, y), _)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    let cauchy: Vec<CauchyEntry> = trajectories
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0].final_state().phi, &w[1].final_state().phi);
            CauchyEntry {
                coarse: w[0].epsilon,
                fine: w[1].epsilon,
                sup_k01: sup_diff(a, b, &masks[0]),
                sup_k02: sup_diff(a, b, &masks[1]),
            }
        })
        .collect();
    let non_cauchy = cauchy.windows(2).any(|w| w[1].sup_k02 >= w[0].sup_k02);
    Ok(LadderResult {
        start,
        rungs: config
            .epsilon_ladder
            .iter()
            .zip(trajectories)
            .map(|(&epsilon, trajectory)| LadderRung { epsilon, trajectory })
            .collect(),
        cauchy,
        non_cauchy,
    })
}

fn run_cold(problems: &[FlowProblem], config: &SolverConfig, threads: usize) -> Result<Vec<Trajectory>, FlowError> {
    if threads == 1 {
        return problems.iter().map(|p| run(p, config)).collect();
    }
    let mut results: Vec<Option<Result<Trajectory, FlowError>>> = (0..problems.len()).map(|_| None).collect();
    for (chunk_p, chunk_r) in problems.chunks(threads).zip(results.chunks_mut(threads)) {
        std::thread::scope(|s| {
            for (p, slot) in chunk_p.iter().zip(chunk_r.iter_mut()) {
                s.spawn(move || *slot = Some(run(p, config)));
            }
        });
    }
    results.into_iter().map(|r| r.expect("every rung ran")).collect()
}

//! The acceptance suite: one verdict per criterion, thresholds pinned here.
//!
//! Experiments that are plain runs or ladders go through [`execute`] and leave
//! run directories under the output directory; the paired experiments run in
//! memory. Every trajectory the suite produces feeds the volume-class check,
//! which is therefore reported last.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use conic_flow::class_flow::{ExtendedReal, Rational};
use conic_flow::diagnostics::{initial_metric_independence, omega_shift_test, scaling_correspondence, smooth_bump};
use conic_flow::flow::{FlowMode, FlowParams, Outcome, SolverConfig, StepMethod};
use conic_flow::geometry::{build_football, build_torus_cone, TorusSpec};
use conic_flow::smoothing::SmoothingParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{parse_class_config, GeometryPlan, Plan};
use crate::rundir::{execute, Command, ExecError, ExecOptions, RunRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// Context for a neighbouring criterion; never counts as a failure.
    Info,
    /// The experiment itself could not be carried out.
    Error,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Info => "INFO",
            Verdict::Error => "ERROR",
        })
    }
}

#[derive(Clone, Debug)]
pub struct CriterionResult {
    pub name: &'static str,
    pub verdict: Verdict,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<5} {}: {} [{:.1} s]",
            self.verdict,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

#[derive(Clone, Debug)]
pub struct SuiteOptions {
    pub out: PathBuf,
    pub threads: usize,
    pub force: bool,
}

const SEED: u64 = 0x5eed_c0de;

fn verdict(pass: bool) -> Verdict {
    if pass {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

struct Suite<'a> {
    opts: &'a SuiteOptions,
    /// `(experiment, worst class defect)` for every run so far.
    defects: Vec<(String, f64)>,
    /// Ladder spreads at the default smoothing constant, for the INFO line.
    default_k_spread: Option<String>,
    sink: &'a mut dyn FnMut(&CriterionResult),
    results: Vec<CriterionResult>,
}

type Check = Result<(Verdict, String), ExecError>;

impl Suite<'_> {
    fn criterion(&mut self, name: &'static str, body: impl FnOnce(&mut Self) -> Check) {
        let clock = Instant::now();
        let (verdict, detail) = body(self).unwrap_or_else(|e| (Verdict::Error, e.to_string()));
        self.push(CriterionResult {
            name,
            verdict,
            detail,
            elapsed: clock.elapsed(),
        });
    }

    fn push(&mut self, r: CriterionResult) {
        (self.sink)(&r);
        self.results.push(r);
    }

    fn execute(&mut self, label: &str, plan: &Plan, command: Command) -> Result<RunRecord, ExecError> {
        let rec = execute(
            plan,
            command,
            &ExecOptions {
                out: self.opts.out.clone(),
                force: self.opts.force,
                threads: self.opts.threads,
            },
        )?;
        for t in &rec.trajectories {
            self.defects.push((format!("{label} ε={}", t.epsilon), t.max_class_defect));
        }
        Ok(rec)
    }
}

fn football_plan(n: usize, epsilon: f64) -> Plan {
    Plan {
        geometry: GeometryPlan::Football {
            resolution: n,
            area0: 4.0 * PI,
            beta0: 0.5,
            beta_inf: 0.5,
        },
        flow: FlowParams::new(FlowMode::Unnormalized, epsilon),
        solver: SolverConfig::default(),
        classes: None,
    }
}

fn torus_ke_plan(n: usize) -> Plan {
    Plan {
        geometry: GeometryPlan::Torus {
            resolution: n,
            area0: 1.0,
            beta: 0.5,
            periods: [1.0, 1.0],
            cone_point: [0.5, 0.5],
        },
        flow: FlowParams::new(FlowMode::Normalized, 0.025),
        solver: stationary_solver(1e-4),
        classes: None,
    }
}

fn stationary_solver(tol: f64) -> SolverConfig {
    SolverConfig {
        method: StepMethod::Rkc,
        t_end: 60.0,
        dt_max: 1.0,
        tol_stationary: Some(tol),
        ..SolverConfig::default()
    }
}

fn numerical(e: impl fmt::Display) -> ExecError {
    ExecError::Numerical(e.to_string())
}

fn sci(values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", items.join(", "))
}

/// Least-squares slope of `y` against `x`.
fn fitted_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (sxy, sxx) = points.iter().fold((0.0, 0.0), |(sxy, sxx), (x, y)| {
        (sxy + (x - mx) * (y - my), sxx + (x - mx) * (x - mx))
    });
    sxy / sxx
}

fn maxtime(_: &mut Suite) -> Check {
    let clock = Instant::now();
    let football = parse_class_config("[geometry]\nkind = \"football\"\nbeta0 = 0.5\nbeta_inf = 0.5\n")?;
    let torus = parse_class_config("[geometry]\nkind = \"torus\"\nbeta = 0.5\n")?;
    let t_football = crate::rundir::max_existence_time(&football)?;
    let t_torus = crate::rundir::max_existence_time(&torus)?;
    let elapsed = clock.elapsed().as_secs_f64();
    let two = Rational::from_integer(2.into());
    let pass = t_football.as_rational() == Some(&two) && t_torus == ExtendedReal::Infinity && elapsed < 1.0;
    Ok((
        verdict(pass),
        format!("football T0 = {t_football} (want exactly 2), torus T0 = {t_torus} (want +inf), {elapsed:.3} s < 1 s"),
    ))
}

fn area_law(s: &mut Suite) -> Check {
    let clock = Instant::now();
    let mut plan = football_plan(128, 0.05);
    plan.solver.t_end = 2.5;
    let rec = s.execute("extinction", &plan, Command::Run)?;
    let elapsed = clock.elapsed().as_secs_f64();
    let traj = &rec.trajectories[0];
    let points: Vec<(f64, f64)> = traj
        .records
        .iter()
        .filter(|r| (0.2..=1.8).contains(&r.t))
        .map(|r| (r.t, r.area))
        .collect();
    let slope = fitted_slope(&points);
    let class_slope = rec.manifest.class.area_slope;
    let slope_err = (slope / class_slope - 1.0).abs();
    let (t_num, extinct) = match traj.outcome {
        Outcome::Extinction { t_num, .. } => (t_num, true),
        other => (other.final_time(), false),
    };
    let t0 = rec.manifest.class.max_existence_time_value.unwrap_or(f64::INFINITY);
    let t_err = (t_num - t0).abs() / t0;
    let pass = (class_slope + 2.0 * PI).abs() < 1e-12
        && slope_err < 0.01
        && extinct
        && t_err < 0.02
        && elapsed < 300.0;
    Ok((
        verdict(pass),
        format!(
            "fitted slope {slope:.6} vs class slope {class_slope:.6} (-2π), rel err {slope_err:.2e} < 1e-2; \
             outcome {} at t = {t_num:.6}, rel err vs T0 = {t0} {t_err:.2e} < 2e-2; {elapsed:.1} s < 300 s",
            traj.outcome.label()
        ),
    ))
}

fn chi_correctness(_: &mut Suite) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst_power = 0.0f64;
    let mut worst_closed = 0.0f64;
    let mut worst_prime = 0.0f64;
    for _ in 0..100 {
        let beta = rng.gen_range(0.05..0.95);
        let s = 10f64.powf(rng.gen_range(-8.0..0.5));
        let p = SmoothingParams::new(beta, 0.0).map_err(numerical)?;
        worst_power = worst_power.max((p.chi(s).map_err(numerical)? - s.powf(beta)).abs());

        // β = 1/2 has a closed form for ε > 0 that exercises the quadrature:
        // χ = √(ε²+s) − ε − ε·ln((√(ε²+s) + ε) / 2ε).
        let eps = 10f64.powf(rng.gen_range(-3.0..-0.5));
        let half = SmoothingParams::new(0.5, eps).map_err(numerical)?;
        let r = (eps * eps + s).sqrt();
        let closed = r - eps - eps * ((r + eps) / (2.0 * eps)).ln();
        worst_closed = worst_closed.max((half.chi(s).map_err(numerical)? - closed).abs());

        let q = SmoothingParams::new(beta, eps).map_err(numerical)?;
        let s1 = 10f64.powf(rng.gen_range(-2.0..0.0));
        let h = 1e-3 * s1;
        let fd = (q.chi(s1 + h).map_err(numerical)? - q.chi(s1 - h).map_err(numerical)?) / (2.0 * h);
        let exact = q.chi_prime(s1).map_err(numerical)?;
        worst_prime = worst_prime.max((fd / exact - 1.0).abs());
    }
    let pass = worst_power < 1e-10 && worst_closed < 1e-10 && worst_prime < 1e-6;
    Ok((
        verdict(pass),
        format!(
            "100 seeded draws: max |χ(0,s) − s^β| = {worst_power:.2e}, max |χ − closed form (β=1/2)| = \
             {worst_closed:.2e} (both < 1e-10); max rel |χ′ − central difference| = {worst_prime:.2e} < 1e-6"
        ),
    ))
}

fn omega_shift(s: &mut Suite) -> Check {
    let clock = Instant::now();
    let g = Arc::new(build_football(0.5, 0.5, 4.0 * PI, 128).map_err(numerical)?);
    let f = smooth_bump(&g, 0.1);
    let cfg = SolverConfig {
        t_end: 1.0,
        checkpoints: vec![0.25, 0.5],
        ..SolverConfig::default()
    };
    let r = omega_shift_test(g, FlowParams::new(FlowMode::Unnormalized, 0.1), &cfg, &f).map_err(numerical)?;
    s.defects.push(("omega shift".to_string(), r.max_class_defect));
    let elapsed = clock.elapsed().as_secs_f64();
    let wanted = [0.25, 0.5, 1.0];
    let diffs: Vec<f64> = wanted
        .iter()
        .filter_map(|t| r.times.iter().position(|x| x == t).map(|i| r.sup_diff[i]))
        .collect();
    let pass = diffs.len() == wanted.len() && diffs.iter().all(|&d| d < 1e-5) && elapsed < 600.0;
    Ok((
        verdict(pass),
        format!("sup|φ' + tf − φ| at t = 0.25, 0.5, 1: {} (< 1e-5); {elapsed:.1} s < 600 s", sci(&diffs)),
    ))
}

fn ladder_cauchy(s: &mut Suite) -> Check {
    let mut plan = football_plan(128, 0.05);
    plan.solver.t_end = 0.5;
    plan.solver.epsilon_ladder = vec![0.2, 0.1, 0.05, 0.025];
    let rec = s.execute("cauchy ladder", &plan, Command::LadderCold)?;
    let diffs: Vec<f64> = rec.diagnostics.cauchy.iter().map(|c| c.sup_k02).collect();
    let ratios: Vec<f64> = diffs.windows(2).map(|w| w[0] / w[1]).collect();
    let pass = ratios.len() == 2 && ratios.iter().all(|&r| r >= 1.5);
    let spreads = rec.manifest.stats.as_ref().and_then(|st| st.uniformity.as_ref()).map(|u| {
        format!(
            "C0 {:.2}, φ̇ {:.2}, trace {:.2}",
            u.spread_c0, u.spread_phidot, u.spread_trace
        )
    });
    s.default_k_spread = spreads;
    Ok((
        verdict(pass),
        format!("football N=128, t=0.5, ε = 0.2/0.1/0.05/0.025: sup_K0.2 diffs {}, ratios {ratios:.2?} (each ≥ 1.5)", sci(&diffs)),
    ))
}

fn ke_limit(s: &mut Suite) -> Check {
    let clock = Instant::now();
    let coarse = s.execute("torus KE N=128", &torus_ke_plan(128), Command::Run)?;
    let fine = s.execute("torus KE N=256", &torus_ke_plan(256), Command::Run)?;
    let elapsed = clock.elapsed().as_secs_f64();
    let target = limit_area(&coarse);
    let summary = |rec: &RunRecord| {
        let last = &rec.trajectories[0].checkpoints.last().expect("final checkpoint").record;
        (
            matches!(rec.trajectories[0].outcome, Outcome::Stationary { .. }),
            last.area,
            last.ke_residual_sup.unwrap_or(f64::INFINITY),
        )
    };
    let (st_c, area_c, res_c) = summary(&coarse);
    let (st_f, _, res_f) = summary(&fine);
    let area_err = (area_c / target - 1.0).abs();
    let reduction = res_c / res_f;
    let pass = st_c
        && st_f
        && (target - PI).abs() < 1e-12
        && area_err < 0.02
        && res_c < 5e-2
        && reduction >= 3.0
        && elapsed < 1800.0;
    Ok((
        verdict(pass),
        format!(
            "torus β=1/2, ε=0.025: stationary (sup|φ̇| < 1e-4) N=128 {st_c}, N=256 {st_f}; area {area_c:.6} vs π, \
             rel err {area_err:.2e} < 2e-2; sup_K0.2|K+1| {res_c:.3e} < 5e-2 at N=128, {res_f:.3e} at N=256, \
             reduction {reduction:.2}x (want ≥ 3x); {elapsed:.1} s < 1800 s"
        ),
    ))
}

/// Area of the twisted canonical class `−c₁ + Σ(1−βᵢ)[Dᵢ]`, the normalized
/// flow's limit. It equals the unnormalized area slope `−2π·deg(twist)`.
fn limit_area(rec: &RunRecord) -> f64 {
    rec.manifest.class.area_slope
}

fn k_independence(s: &mut Suite) -> Check {
    let g = Arc::new(build_torus_cone(&TorusSpec::unit(0.5, 128)).map_err(numerical)?);
    let params = FlowParams::new(FlowMode::Normalized, 0.05).with_k(0.03);
    let r = initial_metric_independence(g, params, 0.06, &stationary_solver(1e-5), 0.2).map_err(numerical)?;
    s.defects.push(("k independence".to_string(), r.max_class_defect));
    let both_stationary = r.outcomes.iter().all(|o| matches!(o, Outcome::Stationary { .. }));
    let pass = both_stationary && r.sup_diff < 1e-3;
    Ok((
        verdict(pass),
        format!(
            "torus N=128, ε=0.05, k = 0.03 vs 0.06, both stationary: {both_stationary}; \
             sup_K0.2 |(φ + kχ) − (φ' + k'χ)| = {:.3e} < 1e-3",
            r.sup_diff
        ),
    ))
}

fn scaling(s: &mut Suite) -> Check {
    let tol = 1e-6;
    let g = Arc::new(build_torus_cone(&TorusSpec::unit(0.5, 64)).map_err(numerical)?);
    let cfg = SolverConfig {
        tol_step: tol,
        ..SolverConfig::default()
    };
    let r = scaling_correspondence(g, FlowParams::new(FlowMode::Normalized, 0.05), &cfg, &[0.5, 1.0], 0.2)
        .map_err(numerical)?;
    s.defects.push(("scaling".to_string(), r.max_class_defect));
    let pass = r.sup_density_diff.iter().all(|&d| d < 3.0 * tol);
    Ok((
        verdict(pass),
        format!(
            "torus N=64, BS23, tol {tol:e}: sup_K0.2 |ω̃ − (1+s)ω(log(1+s))| at s = 0.5, 1: {} (< {:e})",
            sci(&r.sup_density_diff),
            3.0 * tol
        ),
    ))
}

fn uniformity(s: &mut Suite) -> Check {
    let mut plan = football_plan(128, 0.2);
    plan.flow = plan.flow.with_k(2.0);
    plan.solver.t_end = 0.5;
    plan.solver.epsilon_ladder = vec![0.2, 0.1, 0.05, 0.025];
    let rec = s.execute("uniformity ladder", &plan, Command::LadderCold)?;
    let Some(u) = rec.manifest.stats.as_ref().and_then(|st| st.uniformity.clone()) else {
        return Err(numerical("ladder produced no uniformity report"));
    };
    Ok((
        verdict(u.max_spread() < 0.3),
        format!(
            "football N=128, k=2, ε = 0.2..0.025, t ≤ 0.5: spreads C0 {:.3}, sup|φ̇| {:.3}, trace {:.3} (each < 0.3)",
            u.spread_c0, u.spread_phidot, u.spread_trace
        ),
    ))
}

fn volume_class(s: &mut Suite) -> Check {
    let (label, worst) = s
        .defects
        .iter()
        .cloned()
        .fold((String::from("none"), 0.0), |acc, (l, d)| if d > acc.1 { (l, d) } else { acc });
    let pass = !s.defects.is_empty() && worst < 1e-8;
    Ok((
        verdict(pass),
        format!(
            "{} runs, worst |area − class_area|/class_area = {worst:.2e} ({label}) < 1e-8",
            s.defects.len()
        ),
    ))
}

/// Runs every criterion in order, handing each verdict to `sink` as soon as
/// it is known.
pub fn run_suite(opts: &SuiteOptions, sink: &mut dyn FnMut(&CriterionResult)) -> Vec<CriterionResult> {
    let mut s = Suite {
        opts,
        defects: Vec::new(),
        default_k_spread: None,
        sink,
        results: Vec::new(),
    };
    s.criterion("maxtime", maxtime);
    s.criterion("area-law", area_law);
    s.criterion("chi", chi_correctness);
    s.criterion("omega-shift", omega_shift);
    s.criterion("ladder-cauchy", ladder_cauchy);
    s.criterion("ke-limit", ke_limit);
    s.criterion("k-independence", k_independence);
    s.criterion("scaling", scaling);
    s.criterion("uniformity", uniformity);
    if let Some(spread) = s.default_k_spread.take() {
        s.push(CriterionResult {
            name: "uniformity",
            verdict: Verdict::Info,
            detail: format!("same ladder at the default k = 0.05: spreads {spread}"),
            elapsed: Duration::ZERO,
        });
    }
    s.criterion("volume-class", volume_class);
    s.results
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_line_is_exact() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 - 2.0 * i as f64)).collect();
        assert!((fitted_slope(&pts) + 2.0).abs() < 1e-14);
    }

    #[test]
    fn verdict_lines_start_with_the_verdict() {
        let r = CriterionResult {
            name: "x",
            verdict: Verdict::Fail,
            detail: "y".to_string(),
            elapsed: Duration::from_millis(1500),
        };
        assert_eq!(r.to_string(), "FAIL  x: y [1.5 s]");
    }
}

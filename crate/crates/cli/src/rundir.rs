//! Run directories: one per config hash, written in a fixed order.
//!
//! ```text
//! <out>/<hash[..16]>/
//!   config.toml        the validated plan, defaults filled in
//!   manifest.json      written with status "running", finalized at the end
//!   series.csv         one row per accepted step        (run)
//!   checkpoints/*.bin  initial, requested and final states (run)
//!   rungs/NN/...       series.csv and checkpoints/ per ε  (ladder)
//!   diagnostics.json   rebuilt from the checkpoints alone
//! ```
//!
//! Everything except the wall-clock fields of the manifest is bit-identical
//! across repeated runs of the same plan on the same platform.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use chrono::{SecondsFormat, Utc};
use conic_flow::class_flow::{ExtendedReal, FlowMode};
use conic_flow::diagnostics::{c0_and_phidot_monitor, DiagnosticsRecord, UniformityReport};
use conic_flow::flow::{
    epsilon_continuation, run, CauchyEntry, FlowError, FlowParams, FlowProblem, FlowState, LadderStart, Outcome,
    SolverConfig, Trajectory,
};
use conic_flow::geometry::{DiscreteGeometry, GeometrySummary};
use conic_flow::io::{read_checkpoint, read_series, write_checkpoint, write_series, write_series_row};
use serde::{Deserialize, Serialize};

use crate::config::{parse_config, Issue, Plan, ValidationError};

pub const MANIFEST_SCHEMA: &str = "conic-flow-manifest/1";
pub const DIAGNOSTICS_SCHEMA: &str = "conic-flow-diagnostics/1";

/// Class-defect bound every accepted step is held to.
pub const CLASS_DEFECT_LIMIT: f64 = 1e-8;
/// Kähler–Einstein residual bound on `K_d` for stationary normalized runs.
pub const KE_RESIDUAL_LIMIT: f64 = 5e-2;
/// Gauss–Bonnet defect bound, as a fraction of `2π`.
pub const GAUSS_BONNET_FRACTION: f64 = 0.02;
/// Smallest acceptable ratio of successive ladder differences.
pub const CAUCHY_RATIO_LIMIT: f64 = 1.5;

/// What a run directory holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Run,
    LadderCold,
    LadderWarm,
}

impl Command {
    pub fn ladder(start: LadderStart) -> Self {
        match start {
            LadderStart::Cold => Command::LadderCold,
            LadderStart::Warm => Command::LadderWarm,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::LadderCold => "ladder-cold",
            Command::LadderWarm => "ladder-warm",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExecOptions {
    pub out: PathBuf,
    pub force: bool,
    pub threads: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error("{} already holds a run with this configuration; pass --force to replace it", .0.display())]
    Exists(PathBuf),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("verification failed:\n{}", .0.iter().map(|m| format!("  - {m}")).collect::<Vec<_>>().join("\n"))]
    Mismatch(Vec<String>),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
}

impl ExecError {
    /// Process exit status: 2 validation, 3 refusal, 4 numerical, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExecError::Invalid(_) => 2,
            ExecError::Exists(_) => 3,
            ExecError::Numerical(_) | ExecError::Mismatch(_) => 4,
            ExecError::Io { .. } => 1,
        }
    }
}

fn io_err(context: impl AsRef<Path>) -> impl FnOnce(io::Error) -> ExecError {
    let context = context.as_ref().display().to_string();
    move |source| ExecError::Io { context, source }
}

/// Adds output times `every, 2·every, …` below `t_end` to the plan.
pub fn add_periodic_checkpoints(plan: &mut Plan, every: f64) -> Result<(), ValidationError> {
    let t_end = plan.solver.t_end;
    if !(every > 0.0 && every.is_finite()) || t_end / every > 1e5 {
        return Err(ValidationError(vec![Issue {
            path: "--checkpoint-every".to_string(),
            message: format!("need a positive interval giving at most 1e5 checkpoints, got {every}"),
        }]));
    }
    let cps = &mut plan.solver.checkpoints;
    cps.extend((1..).map(|i| i as f64 * every).take_while(|&t| t < t_end));
    cps.sort_by(f64::total_cmp);
    cps.dedup();
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub area0: f64,
    pub euler: i64,
    pub betas: Vec<f64>,
    /// `d(area)/dt` of the unnormalized flow, `−2π(χ − Σ(1−βᵢ))`.
    pub area_slope: f64,
    /// Exact maximal existence time of the unnormalized flow, as text.
    pub max_existence_time: String,
    /// The same as a number; absent when infinite.
    pub max_existence_time_value: Option<f64>,
}

impl ClassSummary {
    pub fn of(plan: &Plan) -> Result<Self, ExecError> {
        let c = plan.class_plan();
        let unnorm = conic_flow::class_flow::ClassFlowPath::riemann_surface(
            c.area0,
            c.euler,
            &c.betas,
            FlowMode::Unnormalized,
        )
        .map_err(|e| ExecError::Numerical(e.to_string()))?;
        let t0 = unnorm.max_existence_time().map_err(|e| ExecError::Numerical(e.to_string()))?;
        Ok(ClassSummary {
            area0: c.area0,
            euler: c.euler,
            betas: c.betas.clone(),
            area_slope: unnorm.area_slope().map_err(|e| ExecError::Numerical(e.to_string()))?,
            max_existence_time: t0.to_string(),
            max_existence_time_value: (!t0.is_infinite()).then(|| t0.to_f64()),
        })
    }
}

/// Exact maximal existence time for `maxtime`.
pub fn max_existence_time(classes: &crate::config::ClassPlan) -> Result<ExtendedReal, ExecError> {
    conic_flow::class_flow::ClassFlowPath::riemann_surface(
        classes.area0,
        classes.euler,
        &classes.betas,
        FlowMode::Unnormalized,
    )
    .and_then(|p| p.max_existence_time())
    .map_err(|e| ExecError::Numerical(e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Completed,
    Extinction,
    Stationary,
    Error,
}

impl From<&Outcome> for Status {
    fn from(o: &Outcome) -> Self {
        match o {
            Outcome::Completed { .. } => Status::Completed,
            Outcome::Stationary { .. } => Status::Stationary,
            Outcome::Extinction { .. } => Status::Extinction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RungStats {
    pub epsilon: f64,
    pub outcome: Outcome,
    pub accepted: usize,
    pub rejected: usize,
    pub max_class_defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub wall_seconds: f64,
    pub rungs: Vec<RungStats>,
    /// Ladders only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub uniformity: Option<UniformityReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub hash: String,
    pub command: Command,
    pub version: String,
    pub geometry: GeometrySummary,
    pub params: FlowParams,
    pub solver: SolverConfig,
    pub class: ClassSummary,
    pub started: String,
    pub finished: Option<String>,
    pub status: Status,
    /// For ladders, the outcome of the finest rung.
    pub outcome: Option<Outcome>,
    pub t_num: Option<f64>,
    pub error: Option<String>,
    pub stats: Option<RunStats>,
}

/// One monitor verdict in `diagnostics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorVerdict {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `"below"` or `"above"`: which side of the threshold passes.
    pub pass_when: String,
    pub pass: bool,
}

impl MonitorVerdict {
    fn below(name: &str, value: f64, threshold: f64) -> Self {
        MonitorVerdict {
            name: name.to_string(),
            value,
            threshold,
            pass_when: "below".to_string(),
            pass: value < threshold,
        }
    }

    fn above(name: &str, value: f64, threshold: f64) -> Self {
        MonitorVerdict {
            name: name.to_string(),
            value,
            threshold,
            pass_when: "above".to_string(),
            pass: value > threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointDiagnostics {
    /// Path relative to the run directory.
    pub file: String,
    pub record: DiagnosticsRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RungDiagnostics {
    pub epsilon: f64,
    pub checkpoints: Vec<CheckpointDiagnostics>,
}

/// Contents of `diagnostics.json`. Every number is a function of the plan and
/// the checkpoint files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsFile {
    pub schema: String,
    pub hash: String,
    pub exclusion_radius: f64,
    pub rungs: Vec<RungDiagnostics>,
    /// Consecutive-rung differences of the final potentials (ladders).
    pub cauchy: Vec<CauchyEntry>,
    pub monitors: Vec<MonitorVerdict>,
}

/// A saved state as it is fed to [`build_diagnostics`].
struct SavedState {
    file: String,
    state: FlowState,
    dt: f64,
}

fn rung_dir(command: Command, index: usize) -> String {
    match command {
        Command::Run => String::new(),
        _ => format!("rungs/{index:02}/"),
    }
}

fn sup_diff_on(a: &[f64], b: &[f64], mask: &[bool]) -> f64 {
    a.iter()
        .zip(b)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((x, y), _)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn build_diagnostics(
    plan: &Plan,
    hash: &str,
    geometry: &Arc<DiscreteGeometry>,
    rungs: &[(f64, Vec<SavedState>)],
) -> Result<DiagnosticsFile, ExecError> {
    let mut out_rungs = Vec::new();
    for (epsilon, saved) in rungs {
        let problem = FlowProblem::new(geometry.clone(), FlowParams { epsilon: *epsilon, ..plan.flow })
            .map_err(|e| ExecError::Numerical(e.to_string()))?;
        let checkpoints = saved
            .iter()
            .map(|s| CheckpointDiagnostics {
                file: s.file.clone(),
                record: DiagnosticsRecord::from_state(&problem, &s.state, s.dt),
            })
            .collect();
        out_rungs.push(RungDiagnostics {
            epsilon: *epsilon,
            checkpoints,
        });
    }

    let masks = [geometry.compact_mask(0.1), geometry.compact_mask(0.2)];
    let cauchy: Vec<CauchyEntry> = rungs
        .windows(2)
        .filter_map(|w| {
            let a = &w[0].1.last()?.state;
            let b = &w[1].1.last()?.state;
            Some(CauchyEntry {
                coarse: w[0].0,
                fine: w[1].0,
                sup_k01: sup_diff_on(&b.phi, &a.phi, &masks[0]),
                sup_k02: sup_diff_on(&b.phi, &a.phi, &masks[1]),
            })
        })
        .collect();

    let records = || out_rungs.iter().flat_map(|r| r.checkpoints.iter().map(|c| &c.record));
    let mut monitors = vec![
        MonitorVerdict::below(
            "class_defect",
            records().map(|r| r.class_defect).fold(0.0, f64::max),
            CLASS_DEFECT_LIMIT,
        ),
        MonitorVerdict::above(
            "positivity_margin",
            records().map(|r| r.positivity_margin).fold(f64::INFINITY, f64::min),
            0.0,
        ),
    ];
    if let Some(last) = out_rungs.last().and_then(|r| r.checkpoints.last()) {
        let r = &last.record;
        monitors.push(MonitorVerdict::below(
            "gauss_bonnet_defect",
            r.gauss_bonnet_defect,
            GAUSS_BONNET_FRACTION * 2.0 * std::f64::consts::PI,
        ));
        let stationary = plan
            .solver
            .tol_stationary
            .is_some_and(|tol| r.sup_abs_phidot() < tol);
        if let (Some(ke), true) = (r.ke_residual_sup, stationary) {
            monitors.push(MonitorVerdict::below("ke_residual", ke, KE_RESIDUAL_LIMIT));
        }
    }
    let ratios: Vec<f64> = cauchy.windows(2).map(|w| w[0].sup_k02 / w[1].sup_k02).collect();
    if !ratios.is_empty() {
        monitors.push(MonitorVerdict::above(
            "cauchy_ratio_min",
            ratios.iter().copied().fold(f64::INFINITY, f64::min),
            CAUCHY_RATIO_LIMIT,
        ));
    }

    Ok(DiagnosticsFile {
        schema: DIAGNOSTICS_SCHEMA.to_string(),
        hash: hash.to_string(),
        exclusion_radius: plan.flow.exclusion_radius,
        rungs: out_rungs,
        cauchy,
        monitors,
    })
}

fn diagnostics_bytes(d: &DiagnosticsFile) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(d).expect("diagnostics serialize");
    v.push(b'\n');
    v
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExecError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("manifest serializes");
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(io_err(path))
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// The finished run: its directory and final manifest.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub diagnostics: DiagnosticsFile,
    pub trajectories: Vec<Trajectory>,
}

/// Directory a plan would be written to.
pub fn run_dir_for(plan: &Plan, command: Command, out: &Path) -> PathBuf {
    out.join(&plan.hash(command.name())[..16])
}

/// Runs `plan` and writes its run directory.
pub fn execute(plan: &Plan, command: Command, opts: &ExecOptions) -> Result<RunRecord, ExecError> {
    let hash = plan.hash(command.name());
    let dir = opts.out.join(&hash[..16]);
    if dir.exists() {
        if !opts.force {
            return Err(ExecError::Exists(dir));
        }
        fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
    }
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;

    let geometry = plan.geometry.build().map_err(|e| ExecError::Numerical(e.to_string()))?;
    let config_text = toml::to_string(plan).expect("plans serialize to TOML");
    fs::write(dir.join("config.toml"), config_text).map_err(io_err(dir.join("config.toml")))?;
    let mut manifest = RunManifest {
        schema: MANIFEST_SCHEMA.to_string(),
        hash: hash.clone(),
        command,
        version: env!("CARGO_PKG_VERSION").to_string(),
        geometry: geometry.summary(),
        params: plan.flow,
        solver: plan.solver.clone(),
        class: ClassSummary::of(plan)?,
        started: now(),
        finished: None,
        status: Status::Running,
        outcome: None,
        t_num: None,
        error: None,
        stats: None,
    };
    let manifest_path = dir.join("manifest.json");
    write_json(&manifest_path, &manifest)?;

    let clock = Instant::now();
    let result = solve(plan, command, &geometry, opts.threads);
    let (trajectories, uniformity) = match result {
        Ok(v) => v,
        Err(e) => {
            manifest.finished = Some(now());
            manifest.status = Status::Error;
            manifest.error = Some(e.to_string());
            write_json(&manifest_path, &manifest)?;
            return Err(ExecError::Numerical(e.to_string()));
        }
    };

    let mut rungs = Vec::new();
    for (i, traj) in trajectories.iter().enumerate() {
        let sub = rung_dir(command, i);
        let cp_dir = dir.join(&sub).join("checkpoints");
        fs::create_dir_all(&cp_dir).map_err(io_err(&cp_dir))?;
        let series_path = dir.join(&sub).join("series.csv");
        let mut w = BufWriter::new(File::create(&series_path).map_err(io_err(&series_path))?);
        write_series(&mut w, &traj.records)
            .and_then(|_| w.flush())
            .map_err(io_err(&series_path))?;
        let mut saved = Vec::new();
        for (j, cp) in traj.checkpoints.iter().enumerate() {
            let file = format!("{sub}checkpoints/{j:04}.bin");
            let path = dir.join(&file);
            let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
            write_checkpoint(&mut w, &cp.state, cp.record.dt, &geometry.grid_shape())
                .and_then(|_| w.flush())
                .map_err(io_err(&path))?;
            saved.push(SavedState {
                file,
                state: cp.state.clone(),
                dt: cp.record.dt,
            });
        }
        rungs.push((traj.epsilon, saved));
    }
    let diagnostics = build_diagnostics(plan, &hash, &geometry, &rungs)?;
    let diag_path = dir.join("diagnostics.json");
    fs::write(&diag_path, diagnostics_bytes(&diagnostics)).map_err(io_err(&diag_path))?;

    let finest = trajectories.last().expect("at least one trajectory");
    manifest.finished = Some(now());
    manifest.status = Status::from(&finest.outcome);
    manifest.outcome = Some(finest.outcome);
    manifest.t_num = Some(finest.outcome.final_time());
    manifest.stats = Some(RunStats {
        wall_seconds: clock.elapsed().as_secs_f64(),
        rungs: trajectories
            .iter()
            .map(|t| RungStats {
                epsilon: t.epsilon,
                outcome: t.outcome,
                accepted: t.accepted,
                rejected: t.rejected,
                max_class_defect: t.max_class_defect,
            })
            .collect(),
        uniformity,
    });
    write_json(&manifest_path, &manifest)?;
    Ok(RunRecord {
        dir,
        manifest,
        diagnostics,
        trajectories,
    })
}

fn solve(
    plan: &Plan,
    command: Command,
    geometry: &Arc<DiscreteGeometry>,
    threads: usize,
) -> Result<(Vec<Trajectory>, Option<UniformityReport>), FlowError> {
    let start = match command {
        Command::Run => {
            let problem = FlowProblem::new(geometry.clone(), plan.flow)?;
            return Ok((vec![run(&problem, &plan.solver)?], None));
        }
        Command::LadderCold => LadderStart::Cold,
        Command::LadderWarm => LadderStart::Warm,
    };
    let ladder = epsilon_continuation(geometry.clone(), plan.flow, &plan.solver, start, threads)?;
    // Fit the φ̇ shape on the last tenth of the run.
    let uniformity = c0_and_phidot_monitor(&ladder, 0.1 * plan.solver.t_end).ok();
    Ok((ladder.rungs.into_iter().map(|r| r.trajectory).collect(), uniformity))
}

/// Outcome of [`verify`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checkpoints: usize,
    pub series_rows: usize,
}

fn read_manifest(dir: &Path) -> Result<RunManifest, ExecError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| ExecError::Io {
        context: path.display().to_string(),
        source: io::Error::new(io::ErrorKind::InvalidData, e),
    })
}

/// Rebuilds every checkpoint's diagnostics record and checks it against the
/// matching `series.csv` row and against `diagnostics.json`, byte for byte.
pub fn verify(dir: &Path) -> Result<VerifyReport, ExecError> {
    let manifest = read_manifest(dir)?;
    let mut problems = Vec::new();
    if matches!(manifest.status, Status::Running | Status::Error) {
        return Err(ExecError::Mismatch(vec![format!(
            "manifest status is {:?}; only finished runs can be verified",
            manifest.status
        )]));
    }
    let config_path = dir.join("config.toml");
    let plan = parse_config(&fs::read_to_string(&config_path).map_err(io_err(&config_path))?)?;
    if plan.hash(manifest.command.name()) != manifest.hash {
        problems.push("config.toml does not hash to the manifest hash".to_string());
    }
    let geometry = plan.geometry.build().map_err(|e| ExecError::Numerical(e.to_string()))?;
    let grid = geometry.grid_shape();

    let n_rungs = manifest.stats.as_ref().map(|s| s.rungs.len()).unwrap_or(0);
    let mut rungs = Vec::new();
    let mut series_rows = 0;
    let mut n_checkpoints = 0;
    for i in 0..n_rungs {
        let sub = rung_dir(manifest.command, i);
        let series_path = dir.join(&sub).join("series.csv");
        let series_text = fs::read_to_string(&series_path).map_err(io_err(&series_path))?;
        let rows = read_series(series_text.as_bytes()).map_err(io_err(&series_path))?;
        let lines: Vec<&str> = series_text.lines().skip(2).collect();
        series_rows += rows.len();

        let cp_dir = dir.join(&sub).join("checkpoints");
        let mut files: Vec<PathBuf> = fs::read_dir(&cp_dir)
            .map_err(io_err(&cp_dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "bin"))
            .collect();
        files.sort();
        let mut saved = Vec::new();
        let mut epsilon = None;
        for path in files {
            let f = File::open(&path).map_err(io_err(&path))?;
            let (header, state) = read_checkpoint(BufReader::new(f)).map_err(io_err(&path))?;
            if header.grid != grid {
                problems.push(format!("{}: grid {:?} differs from {:?}", path.display(), header.grid, grid));
                continue;
            }
            epsilon = Some(header.epsilon);
            let problem = FlowProblem::new(geometry.clone(), FlowParams { epsilon: header.epsilon, ..plan.flow })
                .map_err(|e| ExecError::Numerical(e.to_string()))?;
            let record = DiagnosticsRecord::from_state(&problem, &state, header.dt);
            let mut row = Vec::new();
            write_series_row(&mut row, &record).expect("writing to memory");
            let row = String::from_utf8(row).expect("rows are ASCII");
            match rows.iter().position(|r| r.t == state.t) {
                Some(k) if lines[k] == row.trim_end() => {}
                Some(_) => problems.push(format!("{}: series row at t = {} differs", path.display(), state.t)),
                None => problems.push(format!("{}: no series row at t = {}", path.display(), state.t)),
            }
            let name = path.strip_prefix(dir).unwrap_or(&path).to_string_lossy().replace('\\', "/");
            saved.push(SavedState {
                file: name,
                state,
                dt: header.dt,
            });
            n_checkpoints += 1;
        }
        rungs.push((epsilon.unwrap_or(plan.flow.epsilon), saved));
    }

    let rebuilt = diagnostics_bytes(&build_diagnostics(&plan, &manifest.hash, &geometry, &rungs)?);
    let diag_path = dir.join("diagnostics.json");
    let stored = fs::read(&diag_path).map_err(io_err(&diag_path))?;
    if stored != rebuilt {
        problems.push("diagnostics.json differs from the one rebuilt from checkpoints".to_string());
    }
    if problems.is_empty() {
        Ok(VerifyReport {
            checkpoints: n_checkpoints,
            series_rows,
        })
    } else {
        Err(ExecError::Mismatch(problems))
    }
}

//! Experiment configuration: TOML in, validated [`Plan`] out.
//!
//! ```toml
//! [geometry]
//! kind = "football"        # or "torus"
//! resolution = 128
//! beta0 = 0.5              # football cone points
//! beta_inf = 0.5
//!
//! [flow]
//! mode = "unnormalized"    # or "normalized"
//! epsilon = 0.05
//!
//! [solver]
//! t_end = 1.0
//! ```
//!
//! Every key outside `geometry.kind` has a default. Validation collects all
//! problems before reporting, each tagged with its dotted field path.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use conic_flow::class_flow::{ClassFlowPath, FlowMode};
use conic_flow::flow::{FlowParams, SolverConfig};
use conic_flow::geometry::{build_football, build_torus_cone, DiscreteGeometry, GeometryError, TorusSpec};
use conic_flow::smoothing::SmoothingParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// One validation failure.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid configuration:\n{}", .0.iter().map(|i| format!("  - {i}")).collect::<Vec<_>>().join("\n"))]
pub struct ValidationError(pub Vec<Issue>);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryKindName {
    Football,
    Torus,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    kind: Option<GeometryKindName>,
    resolution: Option<usize>,
    area0: Option<f64>,
    beta0: Option<f64>,
    beta_inf: Option<f64>,
    beta: Option<f64>,
    periods: Option<[f64; 2]>,
    cone_point: Option<[f64; 2]>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFlow {
    mode: Option<FlowMode>,
    epsilon: Option<f64>,
    k: Option<f64>,
    rho: Option<f64>,
    exclusion_radius: Option<f64>,
}

/// Class data for `maxtime` on a surface without building a grid.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ClassPlan {
    pub area0: f64,
    pub euler: i64,
    pub betas: Vec<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    geometry: Option<RawGeometry>,
    flow: Option<RawFlow>,
    solver: Option<SolverConfig>,
    classes: Option<ClassPlan>,
}

/// Geometry choice with every default filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GeometryPlan {
    Football {
        resolution: usize,
        area0: f64,
        beta0: f64,
        beta_inf: f64,
    },
    Torus {
        resolution: usize,
        area0: f64,
        beta: f64,
        periods: [f64; 2],
        cone_point: [f64; 2],
    },
}

impl GeometryPlan {
    pub fn build(&self) -> Result<Arc<DiscreteGeometry>, GeometryError> {
        let g = match *self {
            GeometryPlan::Football {
                resolution,
                area0,
                beta0,
                beta_inf,
            } => build_football(beta0, beta_inf, area0, resolution)?,
            GeometryPlan::Torus {
                resolution,
                area0,
                beta,
                periods,
                cone_point,
            } => build_torus_cone(&TorusSpec {
                beta,
                periods,
                area0,
                resolution,
                cone_point,
            })?,
        };
        Ok(Arc::new(g))
    }

    /// Area, Euler characteristic and cone angles.
    pub fn classes(&self) -> ClassPlan {
        match *self {
            GeometryPlan::Football {
                area0, beta0, beta_inf, ..
            } => ClassPlan {
                area0,
                euler: 2,
                betas: vec![beta0, beta_inf],
            },
            GeometryPlan::Torus { area0, beta, .. } => ClassPlan {
                area0,
                euler: 0,
                betas: vec![beta],
            },
        }
    }
}

/// A fully validated experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub geometry: GeometryPlan,
    pub flow: FlowParams,
    pub solver: SolverConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub classes: Option<ClassPlan>,
}

impl Plan {
    /// Class data for `maxtime`: the explicit `[classes]` table if present.
    pub fn class_plan(&self) -> ClassPlan {
        self.classes.clone().unwrap_or_else(|| self.geometry.classes())
    }

    pub fn class_path(&self) -> Result<ClassFlowPath, conic_flow::class_flow::ClassError> {
        let c = self.class_plan();
        ClassFlowPath::riemann_surface(c.area0, c.euler, &c.betas, self.flow.mode)
    }

    /// SHA-256 of the canonical JSON of the plan plus `extra`.
    pub fn hash(&self, extra: &str) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("plans serialize"));
        h.update(extra.as_bytes());
        hex::encode(h.finalize())
    }
}

const DEFAULT_RESOLUTION: usize = 128;

fn parse_raw(text: &str) -> Result<RawConfig, ValidationError> {
    toml::from_str(text).map_err(|e| {
        ValidationError(vec![Issue {
            path: "<toml>".to_string(),
            message: e.message().to_string(),
        }])
    })
}

/// Parses and validates configuration text, building the geometry once to
/// make sure it can be built.
pub fn parse_config(text: &str) -> Result<Plan, ValidationError> {
    validate(parse_raw(text)?, true)
}

/// Class data only, for `maxtime`. A `[classes]` table is used as is; without
/// one the classes follow from `[geometry]`, and no grid is built.
pub fn parse_class_config(text: &str) -> Result<ClassPlan, ValidationError> {
    let raw = parse_raw(text)?;
    match raw.classes.clone() {
        Some(c) => {
            let mut issues = Vec::new();
            check_classes(&c, &mut issues);
            if issues.is_empty() {
                Ok(c)
            } else {
                Err(ValidationError(issues))
            }
        }
        None => validate(raw, false).map(|p| p.class_plan()),
    }
}

fn issue(issues: &mut Vec<Issue>, path: &str, message: String) {
    issues.push(Issue {
        path: path.to_string(),
        message,
    });
}

fn check_classes(c: &ClassPlan, issues: &mut Vec<Issue>) {
    for (i, &b) in c.betas.iter().enumerate() {
        if !(b > 0.0 && b < 1.0) {
            issue(issues, &format!("classes.betas[{i}]"), format!("cone angle β must lie in (0, 1), got {b}"));
        }
    }
    if !(c.area0 > 0.0 && c.area0.is_finite()) {
        issue(issues, "classes.area0", format!("must be positive, got {}", c.area0));
    }
}

fn validate(raw: RawConfig, build: bool) -> Result<Plan, ValidationError> {
    let mut issues = Vec::new();

    let g = raw.geometry.unwrap_or_default();
    let beta_ok = |b: f64| b > 0.0 && b < 1.0;
    let check_beta = |issues: &mut Vec<Issue>, path: &str, b: f64| {
        if !beta_ok(b) {
            issue(issues, path, format!("cone angle β must lie in (0, 1), got {b}"));
        }
    };
    let resolution = g.resolution.unwrap_or(DEFAULT_RESOLUTION);
    if resolution < 64 {
        issue(&mut issues, "geometry.resolution", format!("must be at least 64, got {resolution}"));
    }
    let geometry = match g.kind {
        None => {
            issue(&mut issues, "geometry.kind", "missing (expected \"football\" or \"torus\")".to_string());
            None
        }
        Some(GeometryKindName::Football) => {
            for (key, present) in [("beta", g.beta.is_some()), ("periods", g.periods.is_some()), ("cone_point", g.cone_point.is_some())] {
                if present {
                    issue(&mut issues, &format!("geometry.{key}"), "not used by the football".to_string());
                }
            }
            let beta0 = g.beta0.unwrap_or(0.5);
            let beta_inf = g.beta_inf.unwrap_or(0.5);
            check_beta(&mut issues, "geometry.beta0", beta0);
            check_beta(&mut issues, "geometry.beta_inf", beta_inf);
            Some(GeometryPlan::Football {
                resolution,
                area0: g.area0.unwrap_or(4.0 * PI),
                beta0,
                beta_inf,
            })
        }
        Some(GeometryKindName::Torus) => {
            for (key, present) in [("beta0", g.beta0.is_some()), ("beta_inf", g.beta_inf.is_some())] {
                if present {
                    issue(&mut issues, &format!("geometry.{key}"), "not used by the torus".to_string());
                }
            }
            let beta = g.beta.unwrap_or(0.5);
            check_beta(&mut issues, "geometry.beta", beta);
            let periods = g.periods.unwrap_or([1.0, 1.0]);
            if periods.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
                issue(&mut issues, "geometry.periods", format!("periods must be positive, got {periods:?}"));
            }
            Some(GeometryPlan::Torus {
                resolution,
                area0: g.area0.unwrap_or(periods[0] * periods[1]),
                beta,
                periods,
                cone_point: g.cone_point.unwrap_or([0.5 * periods[0], 0.5 * periods[1]]),
            })
        }
    };
    if let Some(a) = g.area0 {
        if !(a > 0.0 && a.is_finite()) {
            issue(&mut issues, "geometry.area0", format!("must be positive, got {a}"));
        }
    }

    let f = raw.flow.unwrap_or_default();
    let mode = f.mode.unwrap_or(FlowMode::Unnormalized);
    let epsilon = f.epsilon.unwrap_or(0.05);
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        issue(&mut issues, "flow.epsilon", format!("must be positive, got {epsilon}"));
    }
    let k = f.k.unwrap_or(SmoothingParams::DEFAULT_K);
    if !(k > 0.0 && k.is_finite()) {
        issue(&mut issues, "flow.k", format!("must be positive, got {k}"));
    }
    let rho = f.rho.unwrap_or(SmoothingParams::DEFAULT_RHO);
    if !(rho > 0.0 && rho.is_finite()) {
        issue(&mut issues, "flow.rho", format!("must be positive, got {rho}"));
    }
    let exclusion_radius = f.exclusion_radius.unwrap_or(0.2);
    if !(exclusion_radius > 0.0 && exclusion_radius.is_finite()) {
        issue(&mut issues, "flow.exclusion_radius", format!("must be positive, got {exclusion_radius}"));
    }
    let flow = FlowParams {
        mode,
        epsilon,
        k,
        rho,
        exclusion_radius,
    };

    let solver = raw.solver.unwrap_or_default();
    for (field, message) in solver.problems() {
        issue(&mut issues, &format!("solver.{field}"), message);
    }
    if let Some(c) = &raw.classes {
        check_classes(c, &mut issues);
    }

    // Only buildable geometries make valid plans.
    if build && issues.is_empty() {
        if let Some(plan) = &geometry {
            if let Err(e) = plan.build() {
                issue(&mut issues, "geometry", e.to_string());
            }
        }
    }
    match (issues.is_empty(), geometry) {
        (true, Some(geometry)) => Ok(Plan {
            geometry,
            flow,
            solver,
            classes: raw.classes,
        }),
        _ => Err(ValidationError(issues)),
    }
}

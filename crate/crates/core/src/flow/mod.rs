//! The ε-regularized scalar flows and their time integration.
//!
//! For a potential `φ` the evolving metric is `ω = ω_{t,ε} + ∂∂̄φ` with
//!
//! ```text
//! ω_{t,ε} = α(t) ω₀ + γ(t) ρ + k Σᵢ ∂∂̄χᵢ(ε² + ||Sᵢ||²),   ρ = −Ric(Ω) + Σᵢ(1−βᵢ) R(||·||ᵢ)
//! ```
//!
//! where `(α, γ) = (1, t)` for the unnormalized flow and `(e^{−t}, 1 − e^{−t})`
//! for the normalized one, and
//!
//! ```text
//! ∂φ/∂t = log(ω/Ω) + Σᵢ(1−βᵢ) log(||Sᵢ||² + ε²)          (unnormalized)
//! ∂φ/∂t = log(ω/Ω) + Σᵢ(1−βᵢ) log(||Sᵢ||² + ε²) − φ − k Σᵢ χᵢ   (normalized)
//! ```
//!
//! The `∂∂̄χ` term is the discrete operator applied to the sampled `χ`, so the
//! pair `(φ, kχ)` enters only through `∂∂̄(φ + kχ)` and the initial-metric
//! independence and scaling identities hold exactly before time stepping.

mod problem;
mod run;
mod stepper;

pub use problem::{FlowError, FlowParams, FlowProblem, FlowState, PositivityReport};
pub use run::{
    epsilon_continuation, run, run_from, CauchyEntry, Checkpoint, LadderRung, LadderResult, LadderStart, Outcome,
    SolverConfig, Trajectory,
};
pub use stepper::StepMethod;

pub use crate::class_flow::FlowMode;

//! The smoothing family `χ(ε² + s)` that regularizes `||S||^{2β}`,
//! its closed-form derivative, and the curvature density of `∂∂̄χ`.
//!
//! ```text
//! χ(ε² + s) = β ∫₀ˢ ((ε² + r)^β − ε^{2β}) / r dr
//! ```
//!
//! At `ε = 0` this is exactly `s^β`; for `ε > 0` it is smooth in `s ≥ 0`
//! and increases to `s^β` as `ε → 0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature;

/// Absolute tolerance every `χ` evaluation is held to.
pub const CHI_TOLERANCE: f64 = 1e-12;
const MAX_PANELS: usize = 400;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmoothingError {
    #[error("χ quadrature missed tolerance: estimate {estimate}, error {error:e}")]
    QuadratureFailure { estimate: f64, error: f64 },
    #[error("χ′ is undefined at s = {0} when ε = 0")]
    DomainError(f64),
    #[error("∂∂̄χ is singular at the cone point when ε = 0")]
    SingularityAt,
    #[error("invalid smoothing parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub beta: f64,
    pub epsilon: f64,
    /// Coefficient of the `k∂∂̄χ` bump added to the background.
    pub k: f64,
    /// Exponent of the auxiliary function `χ_ρ`.
    pub rho: f64,
}

impl SmoothingParams {
    pub const DEFAULT_K: f64 = 0.05;
    pub const DEFAULT_RHO: f64 = 0.5;

    pub fn new(beta: f64, epsilon: f64) -> Result<Self, SmoothingError> {
        Self::with_constants(beta, epsilon, Self::DEFAULT_K, Self::DEFAULT_RHO)
    }

    pub fn with_constants(beta: f64, epsilon: f64, k: f64, rho: f64) -> Result<Self, SmoothingError> {
        let check = |name, value: f64, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(SmoothingError::InvalidParameter { name, value })
            }
        };
        check("beta", beta, beta > 0.0 && beta < 1.0)?;
        check("epsilon", epsilon, epsilon >= 0.0 && epsilon.is_finite())?;
        check("k", k, k > 0.0 && k.is_finite())?;
        check("rho", rho, rho > 0.0 && rho < 1.0)?;
        Ok(SmoothingParams {
            beta,
            epsilon,
            k,
            rho,
        })
    }

    pub fn with_epsilon(self, epsilon: f64) -> Self {
        SmoothingParams { epsilon, ..self }
    }

    /// `χ(ε² + s)`.
    pub fn chi(&self, s: f64) -> Result<f64, SmoothingError> {
        chi_with_exponent(self.beta, self.epsilon, s)
    }

    /// `χ′(ε² + s) = β((ε² + s)^β − ε^{2β}) / s`, with its limit `β²ε^{2β−2}` at `s = 0`.
    pub fn chi_prime(&self, s: f64) -> Result<f64, SmoothingError> {
        let (b, e2) = (self.beta, self.epsilon * self.epsilon);
        if e2 == 0.0 {
            if s <= 0.0 {
                return Err(SmoothingError::DomainError(s));
            }
            return Ok(b * s.powf(b - 1.0));
        }
        if s == 0.0 {
            return Ok(b * b * e2.powf(b - 1.0));
        }
        Ok(b * shifted_power_gap(b, e2, s) / s)
    }

    /// The auxiliary function `χ_ρ(ε² + s)`, the same integral with exponent `ρ`.
    pub fn chi_aux(&self, s: f64) -> Result<f64, SmoothingError> {
        chi_with_exponent(self.rho, self.epsilon, s)
    }

    /// Density of `∂∂̄χ(ε² + ||S||²)` from the pointwise bundle data:
    /// `β²|DS|² / (ε² + ||S||²)^{1−β} − β((ε² + ||S||²)^β − ε^{2β}) R`.
    pub fn ddbar_chi_density(&self, norm_sq: f64, ds_sq: f64, curvature: f64) -> Result<f64, SmoothingError> {
        let (b, e2) = (self.beta, self.epsilon * self.epsilon);
        if e2 == 0.0 && norm_sq <= 0.0 {
            return Err(SmoothingError::SingularityAt);
        }
        let base = e2 + norm_sq;
        Ok(b * b * ds_sq * base.powf(b - 1.0) - b * shifted_power_gap(b, e2, norm_sq) * curvature)
    }
}

/// `(e2 + s)^b − e2^b`, accurate when `s ≪ e2`.
fn shifted_power_gap(b: f64, e2: f64, s: f64) -> f64 {
    if e2 == 0.0 {
        return s.powf(b);
    }
    e2.powf(b) * (b * (s / e2).ln_1p()).exp_m1()
}

fn chi_with_exponent(b: f64, eps: f64, s: f64) -> Result<f64, SmoothingError> {
    if s < 0.0 || !s.is_finite() {
        return Err(SmoothingError::DomainError(s));
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    let e2 = eps * eps;
    if e2 == 0.0 {
        return Ok(s.powf(b));
    }
    let fail = |q: quadrature::QuadratureFailure| SmoothingError::QuadratureFailure {
        estimate: q.estimate,
        error: q.error,
    };
    // Below ε² the integrand is smooth in r; above it, in u = log r.
    let split = s.min(e2);
    let near = quadrature::integrate(
        |r| {
            if r == 0.0 {
                b * e2.powf(b - 1.0)
            } else {
                shifted_power_gap(b, e2, r) / r
            }
        },
        0.0,
        split,
        0.5 * CHI_TOLERANCE / b,
        MAX_PANELS,
    )
    .map_err(fail)?;
    let far = if s > e2 {
        quadrature::integrate(
            |u| shifted_power_gap(b, e2, u.exp()),
            e2.ln(),
            s.ln(),
            0.5 * CHI_TOLERANCE / b,
            MAX_PANELS,
        )
        .map_err(fail)?
    } else {
        0.0
    };
    Ok(b * (near + far))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_epsilon_is_the_power() {
        let p = SmoothingParams::new(0.3, 0.0).unwrap();
        assert_eq!(p.chi(2.0).unwrap(), 2f64.powf(0.3));
        assert_eq!(p.chi(0.0).unwrap(), 0.0);
    }

    #[test]
    fn chi_prime_closed_form_value() {
        let p = SmoothingParams::new(0.5, 1.0).unwrap();
        let v = p.chi_prime(1.0).unwrap();
        assert!((v - (2f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn chi_prime_has_a_limit_at_zero() {
        let p = SmoothingParams::new(0.5, 0.1).unwrap();
        let tiny = p.chi_prime(1e-14).unwrap();
        assert!((tiny / p.chi_prime(0.0).unwrap() - 1.0).abs() < 1e-10);
        assert!(SmoothingParams::new(0.5, 0.0).unwrap().chi_prime(0.0).is_err());
    }

    #[test]
    fn ddbar_at_the_cone_point() {
        let p = SmoothingParams::new(0.5, 0.2).unwrap();
        let v = p.ddbar_chi_density(0.0, 3.0, 7.0).unwrap();
        assert!((v - 0.25 * 3.0 / 0.2).abs() < 1e-14);
        assert_eq!(p.ddbar_chi_density(0.4, 0.0, 0.0).unwrap(), 0.0);
        let singular = SmoothingParams::new(0.5, 0.0).unwrap();
        assert_eq!(singular.ddbar_chi_density(0.0, 1.0, 1.0), Err(SmoothingError::SingularityAt));
    }

    #[test]
    fn parameters_are_validated() {
        assert!(SmoothingParams::new(1.0, 0.1).is_err());
        assert!(SmoothingParams::new(0.5, -0.1).is_err());
        assert!(SmoothingParams::with_constants(0.5, 0.1, 0.0, 0.5).is_err());
        assert!(SmoothingParams::with_constants(0.5, 0.1, 0.05, 1.0).is_err());
    }
}

//! Explicit adaptive steppers.
//!
//! `Bs23` is the Bogacki–Shampine 3(2) pair with first-same-as-last reuse.
//! `Rkc` is the second-order Runge–Kutta–Chebyshev method (Sommeijer,
//! Shampine & Verwer), whose stage count grows with the square root of the
//! stiffness; it is the practical choice for long normalized runs on fine
//! torus grids, where the 5-point stencil makes `Bs23` stability-bound.

use serde::{Deserialize, Serialize};

use super::problem::{FlowError, FlowProblem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StepMethod {
    #[default]
    Bs23,
    Rkc,
}

impl std::str::FromStr for StepMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bs23" => Ok(StepMethod::Bs23),
            "rkc" => Ok(StepMethod::Rkc),
            other => Err(format!("unknown step method {other:?} (expected \"bs23\" or \"rkc\")")),
        }
    }
}

/// Damping of the Chebyshev polynomials in RKC.
const RKC_DAMPING: f64 = 2.0 / 13.0;
const MAX_RKC_STAGES: usize = 4000;
const BS23_STIFF_LIMIT: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum StepResult {
    Accepted { dt_next: f64, error: f64 },
    /// Error estimate too large.
    Rejected { dt_next: f64, error: f64 },
    /// A stage left the positive cone or the margin collapsed too fast.
    PositivityRetry,
}

pub(crate) struct Integrator<'p> {
    problem: &'p FlowProblem,
    method: StepMethod,
    atol: f64,
    rtol: f64,
    safety: f64,
    pub t: f64,
    pub y: Vec<f64>,
    pub f: Vec<f64>,
    pub w: Vec<f64>,
    pub margin: f64,
    pub stages_used: usize,
    y_new: Vec<f64>,
    f_new: Vec<f64>,
    w_new: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    tmp: Vec<f64>,
    prev: Vec<f64>,
}

impl<'p> Integrator<'p> {
    pub fn new(
        problem: &'p FlowProblem,
        method: StepMethod,
        tol: f64,
        safety: f64,
        t: f64,
        y: Vec<f64>,
    ) -> Result<Self, FlowError> {
        let n = problem.len();
        let mut f = vec![0.0; n];
        let mut w = vec![0.0; n];
        let margin = problem.rhs_into(t, &y, &mut f, &mut w)?;
        Ok(Integrator {
            problem,
            method,
            atol: tol,
            rtol: tol,
            safety,
            t,
            y,
            f,
            w,
            margin,
            stages_used: 0,
            y_new: vec![0.0; n],
            f_new: vec![0.0; n],
            w_new: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            tmp: vec![0.0; n],
            prev: vec![0.0; n],
        })
    }

    pub fn spectral_radius(&self) -> f64 {
        self.problem.spectral_radius(&self.w)
    }

    /// Largest step that keeps the stiff modes damped. The BS23 stability
    /// polynomial at `−1` is `1/3`; running the controller at the edge of
    /// the stability interval instead leaves tolerance-sized grid noise.
    pub fn stable_dt(&self) -> f64 {
        match self.method {
            StepMethod::Bs23 => BS23_STIFF_LIMIT / self.spectral_radius(),
            StepMethod::Rkc => f64::INFINITY,
        }
    }

    /// Attempts a step to `t_new`; on acceptance the state advances. The
    /// final stage is evaluated at exactly `t_new`.
    pub fn try_step(&mut self, t_new: f64) -> Result<StepResult, FlowError> {
        let dt = t_new - self.t;
        let attempt = match self.method {
            StepMethod::Bs23 => self.bs23(dt, t_new),
            StepMethod::Rkc => self.rkc(dt, t_new),
        };
        let (error, margin_new) = match attempt {
            Ok(v) => v,
            Err(FlowError::NonpositiveDensity { .. }) => return Ok(StepResult::PositivityRetry),
            Err(e) => return Err(e),
        };
        if !error.is_finite() {
            return Ok(StepResult::PositivityRetry);
        }
        let factor = if error == 0.0 {
            5.0
        } else {
            (0.9 * error.powf(-1.0 / 3.0)).clamp(0.2, 5.0)
        };
        if error > 1.0 {
            return Ok(StepResult::Rejected {
                dt_next: dt * factor,
                error,
            });
        }
        if margin_new < self.safety * self.margin {
            return Ok(StepResult::PositivityRetry);
        }
        self.t = t_new;
        std::mem::swap(&mut self.y, &mut self.y_new);
        std::mem::swap(&mut self.f, &mut self.f_new);
        std::mem::swap(&mut self.w, &mut self.w_new);
        self.margin = margin_new;
        Ok(StepResult::Accepted {
            dt_next: dt * factor,
            error,
        })
    }

    fn error_norm(&self, err: impl Fn(usize) -> f64) -> f64 {
        let mut norm: f64 = 0.0;
        for i in 0..self.y.len() {
            let scale = self.atol + self.rtol * self.y[i].abs().max(self.y_new[i].abs());
            norm = norm.max(err(i).abs() / scale);
        }
        norm
    }

    fn bs23(&mut self, dt: f64, t_new: f64) -> Result<(f64, f64), FlowError> {
        let p = self.problem;
        let n = self.y.len();
        let t = self.t;
        for i in 0..n {
            self.tmp[i] = self.y[i] + 0.5 * dt * self.f[i];
        }
        p.rhs_into(t + 0.5 * dt, &self.tmp, &mut self.k2, &mut self.w_new)?;
        for i in 0..n {
            self.tmp[i] = self.y[i] + 0.75 * dt * self.k2[i];
        }
        p.rhs_into(t + 0.75 * dt, &self.tmp, &mut self.k3, &mut self.w_new)?;
        for i in 0..n {
            self.y_new[i] =
                self.y[i] + dt * (2.0 / 9.0 * self.f[i] + 1.0 / 3.0 * self.k2[i] + 4.0 / 9.0 * self.k3[i]);
        }
        let margin = p.rhs_into(t_new, &self.y_new, &mut self.f_new, &mut self.w_new)?;
        let (f, k2, k3, f4) = (&self.f, &self.k2, &self.k3, &self.f_new);
        let error = self.error_norm(|i| {
            dt * (-5.0 / 72.0 * f[i] + 1.0 / 12.0 * k2[i] + 1.0 / 9.0 * k3[i] - 1.0 / 8.0 * f4[i])
        });
        Ok((error, margin))
    }

    fn rkc(&mut self, dt: f64, t_new: f64) -> Result<(f64, f64), FlowError> {
        let p = self.problem;
        let n = self.y.len();
        let t = self.t;
        let rho = self.spectral_radius();
        let s = ((1.0 + (1.0 + 1.54 * dt * rho).sqrt()).floor() as usize).clamp(2, MAX_RKC_STAGES);
        self.stages_used = s;
        let coeffs = RkcCoefficients::new(s);

        // Y_{j-2} in prev, Y_{j-1} in tmp, Y_j assembled in y_new.
        self.prev.copy_from_slice(&self.y);
        let mu1 = coeffs.mu_tilde[1];
        for i in 0..n {
            self.tmp[i] = self.y[i] + mu1 * dt * self.f[i];
        }
        for j in 2..=s {
            let tj = t + coeffs.c[j - 1] * dt;
            p.rhs_into(tj, &self.tmp, &mut self.k2, &mut self.w_new)?;
            let (mu, nu, mut_, gt) = (coeffs.mu[j], coeffs.nu[j], coeffs.mu_tilde[j], coeffs.gamma_tilde[j]);
            for i in 0..n {
                self.y_new[i] = (1.0 - mu - nu) * self.y[i]
                    + mu * self.tmp[i]
                    + nu * self.prev[i]
                    + mut_ * dt * self.k2[i]
                    + gt * dt * self.f[i];
            }
            std::mem::swap(&mut self.prev, &mut self.tmp);
            std::mem::swap(&mut self.tmp, &mut self.y_new);
        }
        std::mem::swap(&mut self.tmp, &mut self.y_new);
        let margin = p.rhs_into(t_new, &self.y_new, &mut self.f_new, &mut self.w_new)?;
        let (y, yn, f, fn_) = (&self.y, &self.y_new, &self.f, &self.f_new);
        let error = self.error_norm(|i| (12.0 * (y[i] - yn[i]) + 6.0 * dt * (f[i] + fn_[i])) / 15.0);
        Ok((error, margin))
    }
}

/// Coefficients of the damped `s`-stage RKC scheme, indexed by stage.
struct RkcCoefficients {
    mu: Vec<f64>,
    nu: Vec<f64>,
    mu_tilde: Vec<f64>,
    gamma_tilde: Vec<f64>,
    c: Vec<f64>,
}

impl RkcCoefficients {
    fn new(s: usize) -> Self {
        let w0 = 1.0 + RKC_DAMPING / (s * s) as f64;
        let mut t = vec![0.0; s + 1];
        let mut dt = vec![0.0; s + 1];
        let mut ddt = vec![0.0; s + 1];
        t[0] = 1.0;
        t[1] = w0;
        dt[1] = 1.0;
        for j in 2..=s {
            t[j] = 2.0 * w0 * t[j - 1] - t[j - 2];
            dt[j] = 2.0 * t[j - 1] + 2.0 * w0 * dt[j - 1] - dt[j - 2];
            ddt[j] = 4.0 * dt[j - 1] + 2.0 * w0 * ddt[j - 1] - ddt[j - 2];
        }
        let w1 = dt[s] / ddt[s];
        let mut b = vec![0.0; s + 1];
        for j in 2..=s {
            b[j] = ddt[j] / (dt[j] * dt[j]);
        }
        b[0] = b[2];
        b[1] = b[2];

        let mut mu = vec![0.0; s + 1];
        let mut nu = vec![0.0; s + 1];
        let mut mu_tilde = vec![0.0; s + 1];
        let mut gamma_tilde = vec![0.0; s + 1];
        let mut c = vec![0.0; s + 1];
        mu_tilde[1] = b[1] * w1;
        c[1] = mu_tilde[1];
        for j in 2..=s {
            mu[j] = 2.0 * b[j] * w0 / b[j - 1];
            nu[j] = -b[j] / b[j - 2];
            mu_tilde[j] = 2.0 * b[j] * w1 / b[j - 1];
            gamma_tilde[j] = -(1.0 - b[j - 1] * t[j - 1]) * mu_tilde[j];
            c[j] = mu[j] * c[j - 1] + nu[j] * c[j - 2] + mu_tilde[j] + gamma_tilde[j];
        }
        RkcCoefficients {
            mu,
            nu,
            mu_tilde,
            gamma_tilde,
            c,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rkc_stage_times_end_at_one() {
        for s in [2, 5, 17, 200] {
            let c = RkcCoefficients::new(s);
            assert!((c.c[s] - 1.0).abs() < 1e-10, "s = {s}: {}", c.c[s]);
        }
    }

    #[test]
    fn rkc_is_second_order_on_a_scalar_decay() {
        // y' = −λy with the recurrence applied directly.
        let run = |dt: f64, s: usize| {
            let c = RkcCoefficients::new(s);
            let lam = 3.0;
            let mut y = 1.0;
            let steps = (1.0 / dt).round() as usize;
            for _ in 0..steps {
                let f0 = -lam * y;
                let (mut prev, mut cur) = (y, y + c.mu_tilde[1] * dt * f0);
                for j in 2..=s {
                    let next = (1.0 - c.mu[j] - c.nu[j]) * y
                        + c.mu[j] * cur
                        + c.nu[j] * prev
                        + c.mu_tilde[j] * dt * (-lam * cur)
                        + c.gamma_tilde[j] * dt * f0;
                    prev = cur;
                    cur = next;
                }
                y = cur;
            }
            (y - (-3.0f64).exp()).abs()
        };
        let ratio = run(0.01, 6) / run(0.005, 6);
        assert!(ratio > 3.8 && ratio < 4.2, "{ratio}");
    }

    #[test]
    fn method_names_parse() {
        assert_eq!("rkc".parse::<StepMethod>(), Ok(StepMethod::Rkc));
        assert!("rk4".parse::<StepMethod>().is_err());
    }
}

//! Damped and standard Newton steps and the two-phase damped Newton method.
//!
//! The damped step `x - f''(x)^{-1} f'(x) / (1 + M_f lambda)` decreases `f` by
//! at least `omega(M_f lambda) / M_f^2` from any starting point. Inside the
//! region `lambda <= 1/(2 M_f)` the method switches to full steps.

use std::time::Duration;

use crate::error::{Error, Result};
use crate::oracle::{LocalModel, ScOracle, Vector};
use crate::scalar::{omega, omega_of, omega_star_inverse, Dimensionless};
use crate::trace::{Clock, IterRecord, SolveTrace, Stage, Status};

#[derive(Debug, Clone)]
pub struct NewtonConfig {
    pub max_iters: usize,
    /// Decrement below which full steps are taken. Defaults to `1/(2 M_f)`.
    pub region_radius: Option<f64>,
    /// Decrement at which the method stops. Defaults to `1e-10 / M_f`.
    pub finish_tol: Option<f64>,
    /// When false, every step is damped.
    pub standard_phase: bool,
    pub time_limit: Option<Duration>,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig { max_iters: 10_000, region_radius: None, finish_tol: None, standard_phase: true, time_limit: None }
    }
}

impl NewtonConfig {
    pub fn damped_only() -> Self {
        NewtonConfig { standard_phase: false, ..Self::default() }
    }

    pub(crate) fn radius(&self, m_f: f64) -> Result<f64> {
        let default = if m_f > 0.0 { 0.5 / m_f } else { f64::INFINITY };
        let r = self.region_radius.unwrap_or(default);
        if !(r > 0.0) || (m_f > 0.0 && r * m_f > 0.5 * (1.0 + 1e-12)) {
            return Err(Error::InvalidArgument(format!("region radius {r} must lie in (0, 1/(2 M_f)]")));
        }
        Ok(r)
    }

    pub(crate) fn tolerance(&self, m_f: f64) -> f64 {
        self.finish_tol.unwrap_or(if m_f > 0.0 { 1e-10 / m_f } else { 1e-10 })
    }
}

/// Outcome of one Newton step from a known local model.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub next: Vector,
    pub lambda: f64,
    /// `||next - x||_x`.
    pub step_norm: f64,
}

pub(crate) fn damped_from(model: &LocalModel, m_f: f64) -> Result<StepResult> {
    let lambda = model.lambda()?;
    let d = model.newton_direction()?;
    let scale = 1.0 / (1.0 + Dimensionless::scaled(m_f, lambda).get());
    Ok(StepResult { next: &model.x - d * scale, lambda, step_norm: lambda * scale })
}

pub(crate) fn standard_from(model: &LocalModel) -> Result<StepResult> {
    let lambda = model.lambda()?;
    let d = model.newton_direction()?;
    Ok(StepResult { next: &model.x - d, lambda, step_norm: lambda })
}

/// `x - f''(x)^{-1} f'(x)`. Fails with `OutsideDomain` if the full step leaves
/// the domain.
pub fn standard_newton_step(oracle: &dyn ScOracle, x: &Vector) -> Result<Vector> {
    let model = LocalModel::at(oracle, x)?;
    let step = standard_from(&model)?;
    if !oracle.in_domain(&step.next) {
        return Err(Error::OutsideDomain);
    }
    Ok(step.next)
}

/// `x - f''(x)^{-1} f'(x) / (1 + M_f lambda_f(x))`.
pub fn damped_newton_step(oracle: &dyn ScOracle, x: &Vector) -> Result<Vector> {
    let model = LocalModel::at(oracle, x)?;
    Ok(damped_from(&model, oracle.sc_constant())?.next)
}

/// Guaranteed decrease `omega(M_f lambda) / M_f^2` of a damped step
/// (`lambda^2 / 2` when `M_f = 0`).
pub fn damped_decrease_bound(m_f: f64, lambda: f64) -> Result<f64> {
    if m_f == 0.0 {
        return Ok(0.5 * lambda * lambda);
    }
    Ok(omega_of(Dimensionless::scaled(m_f, lambda))? / (m_f * m_f))
}

/// Upper bound on the number of damped steps before the quadratic region,
/// `Delta / omega(1/2)` with `Delta = M_f^2 (f(x_0) - f*)`.
pub fn dnm_iteration_bound(delta: f64) -> f64 {
    delta / omega(0.5).expect("constant argument")
}

/// Two-phase Newton method: damped steps until `lambda <= radius`, then full
/// steps until `lambda <= finish_tol`. A full step that leaves the domain is
/// replaced by a damped one and the trace is flagged.
pub fn dnm_solve(oracle: &dyn ScOracle, x0: &Vector, config: &NewtonConfig) -> Result<(Vector, SolveTrace)> {
    let m_f = oracle.sc_constant();
    let radius = config.radius(m_f)?;
    let tol = config.tolerance(m_f);
    let clock = Clock::start(config.time_limit);
    let mut trace = SolveTrace::new();
    let mut model = LocalModel::at(oracle, x0)?;
    let mut stalls = 0;
    let mut k = 0;
    loop {
        let lam = model.lambda()?;
        if trace.region_entry.is_none() && lam <= radius {
            trace.region_entry = Some(k);
        }
        let mut rec = IterRecord::new(k, lam, model.value, Stage::Final);
        rec.elapsed = clock.elapsed();
        let status = if lam <= tol {
            Some(Status::Converged)
        } else if stalls >= 3 {
            Some(Status::Stalled)
        } else if k >= config.max_iters {
            Some(Status::MaxIterations)
        } else if clock.expired() {
            Some(Status::TimeLimit)
        } else {
            None
        };
        if let Some(status) = status {
            trace.records.push(rec);
            trace.status = status;
            return Ok((model.x, trace));
        }
        let mut stage = if config.standard_phase && lam <= radius { Stage::Standard } else { Stage::Damped };
        let mut step = if stage == Stage::Standard { standard_from(&model)? } else { damped_from(&model, m_f)? };
        if stage == Stage::Standard && !oracle.in_domain(&step.next) {
            stage = Stage::DampedFallback;
            trace.flag("standard step left the domain; damped fallback used");
            step = damped_from(&model, m_f)?;
        }
        rec.stage = stage;
        rec.step_norm = step.step_norm;
        trace.records.push(rec);
        let next = LocalModel::at(oracle, &step.next)?;
        let next_lam = next.lambda()?;
        if stage == Stage::Standard && next_lam >= 0.999 * lam {
            stalls += 1;
        } else {
            stalls = 0;
        }
        model = next;
        k += 1;
    }
}

/// Checks `M^2 Delta_{k+1} <= M^2 Delta_k - omega(omega_star^{-1}(M^2 Delta_k))`
/// on every damped step taken from a point with `M_f lambda <= 1`.
#[derive(Debug, Clone)]
pub struct SuperlinearCheck {
    pub checked: usize,
    /// Largest `lhs - rhs`; non-positive when the bound holds.
    pub worst_excess: f64,
    pub violations: usize,
}

impl SuperlinearCheck {
    pub fn ok(&self) -> bool {
        self.violations == 0
    }
}

pub fn superlinear_bound_check(trace: &SolveTrace, m_f: f64, f_star: f64) -> SuperlinearCheck {
    let m2 = m_f * m_f;
    let mut out = SuperlinearCheck { checked: 0, worst_excess: f64::NEG_INFINITY, violations: 0 };
    for pair in trace.records.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if !matches!(a.stage, Stage::Damped | Stage::DampedFallback) || m_f * a.lambda > 1.0 {
            continue;
        }
        let delta = (m2 * (a.value - f_star)).max(0.0);
        let Ok(inv) = omega_star_inverse(delta) else { continue };
        let Ok(gain) = omega(inv) else { continue };
        let lhs = m2 * (b.value - f_star);
        let excess = lhs - (delta - gain);
        let tol = 64.0 * f64::EPSILON * m2 * (a.value.abs() + f_star.abs() + 1.0);
        out.checked += 1;
        out.worst_excess = out.worst_excess.max(excess);
        if excess > tol {
            out.violations += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{Quadratic, XMinusLog};
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn damped_step_from_two_lands_on_minimizer() {
        let f = XMinusLog { n: 1 };
        let x = damped_newton_step(&f, &DVector::from_element(1, 2.0)).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quadratic_solves_in_one_standard_step() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let f = Quadratic::new(q, DVector::from_vec(vec![1.0, -1.0])).unwrap();
        let (_, trace) = dnm_solve(&f, &DVector::from_vec(vec![10.0, 10.0]), &NewtonConfig::default()).unwrap();
        assert_eq!(trace.status, Status::Converged);
        assert_eq!(trace.iterations(), 1);
        assert_eq!(trace.records[0].stage, Stage::Standard);
    }

    #[test]
    fn start_outside_domain_is_an_error() {
        let f = XMinusLog { n: 1 };
        assert!(matches!(dnm_solve(&f, &DVector::from_element(1, -1.0), &NewtonConfig::default()), Err(Error::OutsideDomain)));
    }

    #[test]
    fn radius_beyond_region_is_rejected() {
        let f = XMinusLog { n: 1 };
        let cfg = NewtonConfig { region_radius: Some(0.9), ..Default::default() };
        assert!(dnm_solve(&f, &DVector::from_element(1, 3.0), &cfg).is_err());
    }

    #[test]
    fn iteration_bound_constant() {
        assert!((dnm_iteration_bound(1.0) - 1.0 / 0.094_534_891_891_835_18).abs() < 1e-9);
    }
}

//! Cubic-regularized Newton steps and the multi-stage restart scheme for
//! strongly convex functions with Lipschitz Hessian.

use std::sync::Arc;

use nalgebra::Cholesky;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::linops::SpdMatrix;
use crate::oracle::{Evaluation, LocalModel, ScOracle, Vector};
use crate::scalar::omega_star_inverse;
use crate::trace::{IterRecord, SolveTrace, Stage, Status};

pub use crate::functions::sc_constant_from_lipschitz;

/// A function with strong convexity modulus `sigma_f` and Hessian Lipschitz
/// constant `H_f`, both measured in the metric `||x||^2 = <B x, x>`.
#[derive(Clone)]
pub struct LipschitzStrongOracle {
    pub base: Arc<dyn ScOracle>,
    pub sigma_f: f64,
    pub h_f: f64,
    pub metric: SpdMatrix,
}

impl std::fmt::Debug for LipschitzStrongOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LipschitzStrongOracle").field("sigma_f", &self.sigma_f).field("h_f", &self.h_f).finish()
    }
}

impl LipschitzStrongOracle {
    pub fn new(base: Arc<dyn ScOracle>, sigma_f: f64, h_f: f64) -> Result<Self> {
        let n = base.dim();
        Self::with_metric(base, sigma_f, h_f, SpdMatrix::identity(n))
    }

    pub fn with_metric(base: Arc<dyn ScOracle>, sigma_f: f64, h_f: f64, metric: SpdMatrix) -> Result<Self> {
        check_dim(base.dim(), metric.dim())?;
        if !(sigma_f > 0.0) || !(h_f >= 0.0) {
            return Err(Error::InvalidArgument(format!("need sigma_f > 0 and H_f >= 0, got {sigma_f}, {h_f}")));
        }
        Ok(LipschitzStrongOracle { base, sigma_f, h_f, metric })
    }

    /// `H_f / (2 sigma_f^{3/2})`.
    pub fn m_f(&self) -> f64 {
        self.h_f / (2.0 * self.sigma_f.powf(1.5))
    }

    /// `sigma_f^3 / (2 H_f^2) = 1 / (8 M_f^2)`: the bound on `f(x) - f*` that
    /// defines the quadratic region of the cubic method.
    pub fn region_gap(&self) -> f64 {
        if self.h_f == 0.0 {
            return f64::INFINITY;
        }
        self.sigma_f.powi(3) / (2.0 * self.h_f * self.h_f)
    }

    pub fn metric_norm(&self, h: &Vector) -> f64 {
        h.dot(&(self.metric.matrix() * h)).max(0.0).sqrt()
    }
}

impl ScOracle for LipschitzStrongOracle {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn sc_constant(&self) -> f64 {
        self.m_f()
    }
    fn in_domain(&self, x: &Vector) -> bool {
        self.base.in_domain(x)
    }
    fn evaluate(&self, x: &Vector) -> Result<Evaluation> {
        self.base.evaluate(x)
    }
    fn value(&self, x: &Vector) -> Result<f64> {
        self.base.value(x)
    }
}

#[derive(Debug, Clone)]
pub struct CubicStep {
    pub next: Vector,
    /// `||next - x||` in the metric.
    pub r: f64,
    /// `f(x) - min_y { Q(x, y) + M/6 ||y - x||^3 }`.
    pub model_decrease: f64,
    /// Secular-equation residual `|| ||d(r)|| - r |`.
    pub secular_residual: f64,
    pub evaluations: usize,
}

/// Global minimizer of `<g, h> + <H h, h>/2 + M/6 ||h||^3` over `h`, where
/// `h = -(H + (M r / 2) B)^{-1} g` and `r = ||h||` is found by safeguarded
/// Newton on the secular equation. `H` must be positive semidefinite.
pub fn cubic_model_step(e: &Evaluation, metric: &SpdMatrix, m: f64) -> Result<(Vector, f64, f64, usize)> {
    if !(m > 0.0) {
        return Err(Error::InvalidArgument(format!("cubic parameter must be positive, got {m}")));
    }
    let g = &e.gradient;
    let b = metric.matrix();
    let n = g.len();
    if g.iter().all(|&v| v == 0.0) {
        return Ok((Vector::zeros(n), 0.0, 0.0, 0));
    }
    // d(r) and ||d(r)|| for a trial radius; None when the shifted Hessian is singular
    let direction = |r: f64| -> Option<(Vector, f64, f64)> {
        let shifted = &e.hessian + b * (0.5 * m * r);
        let chol = Cholesky::new(shifted)?;
        let d = -chol.solve(g);
        let bd = b * &d;
        let norm = d.dot(&bd).max(0.0).sqrt();
        // d/dr ||d|| = -(M/2) <B d, (H + c B)^{-1} B d> / ||d||
        let deriv = if norm > 0.0 { -0.5 * m * bd.dot(&chol.solve(&bd)) / norm } else { 0.0 };
        Some((d, norm, deriv))
    };
    let g_dual = g.dot(&Cholesky::new(b.clone()).ok_or(Error::NotPositiveDefinite)?.solve(g)).sqrt();
    let mut lo = 0.0f64;
    let mut hi = (2.0 * g_dual / m).sqrt();
    let mut history = Vec::new();
    let mut r = hi;
    let mut evaluations = 0;
    for _ in 0..200 {
        evaluations += 1;
        let Some((d, norm, deriv)) = direction(r) else {
            lo = r;
            r = 0.5 * (lo + hi);
            history.push((lo, hi));
            continue;
        };
        let phi = r - norm;
        if phi.abs() <= 1e-12 * (1.0 + r) {
            return Ok((d, r, phi.abs(), evaluations));
        }
        if phi > 0.0 {
            hi = r;
        } else {
            lo = r;
        }
        history.push((lo, hi));
        let next = r - phi / (1.0 - deriv);
        r = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if hi - lo <= 1e-15 * hi {
            let (d, norm, _) = direction(hi).ok_or(Error::NotPositiveDefinite)?;
            return Ok((d, hi, (hi - norm).abs(), evaluations));
        }
    }
    let tail: Vec<String> = history.iter().rev().take(5).map(|(l, h)| format!("[{l:.3e}, {h:.3e}]")).collect();
    Err(Error::RootFinding(format!("secular equation did not converge; last brackets {}", tail.join(" "))))
}

/// `T_M(x) = argmin_y { Q(x, y) + M/6 ||y - x||^3 }`.
pub fn cubic_step(oracle: &dyn ScOracle, x: &Vector, m: f64, metric: &SpdMatrix) -> Result<CubicStep> {
    check_dim(oracle.dim(), x.len())?;
    check_dim(oracle.dim(), metric.dim())?;
    let e = oracle.evaluate(x)?;
    let (d, r, secular_residual, evaluations) = cubic_model_step(&e, metric, m)?;
    let model_decrease = -(e.gradient.dot(&d) + 0.5 * d.dot(&(&e.hessian * &d)) + m / 6.0 * r.powi(3));
    Ok(CubicStep { next: x + d, r, model_decrease, secular_residual, evaluations })
}

#[derive(Debug, Clone)]
pub struct CubicConfig {
    pub max_iters: usize,
    /// Regularization parameter; defaults to `H_f`.
    pub m: Option<f64>,
    /// Known optimal value, used for the region test `f - f* <= 1/(8 M_f^2)`.
    pub f_star: Option<f64>,
    /// Keep stepping after entering the region until `lambda <= finish_tol`.
    pub finish_tol: Option<f64>,
}

impl Default for CubicConfig {
    fn default() -> Self {
        CubicConfig { max_iters: 10_000, m: None, f_star: None, finish_tol: None }
    }
}

/// Membership test for the quadratic region of the cubic method. Without
/// `f*`, uses `M_f lambda <= omega_star^{-1}(1/8)`, which implies
/// `f - f* <= omega_star(M_f lambda) / M_f^2 <= 1/(8 M_f^2)`.
pub fn in_cubic_region(oracle: &LipschitzStrongOracle, value: f64, lambda: f64, f_star: Option<f64>) -> bool {
    match f_star {
        Some(fs) => value - fs <= oracle.region_gap(),
        None => {
            let m = oracle.m_f();
            m == 0.0 || m * lambda <= omega_star_inverse(0.125).expect("constant argument")
        }
    }
}

fn cubic_record(oracle: &LipschitzStrongOracle, x: &Vector, k: usize) -> Result<(IterRecord, f64)> {
    let model = LocalModel::at(oracle, x)?;
    let lambda = model.lambda()?;
    Ok((IterRecord::new(k, lambda, model.value, Stage::Cubic), lambda))
}

/// Cubic-regularized Newton from `x0` until the quadratic region (or
/// `finish_tol`) is reached.
pub fn crnm_solve(oracle: &LipschitzStrongOracle, x0: &Vector, config: &CubicConfig) -> Result<(Vector, SolveTrace)> {
    let m = config.m.unwrap_or(oracle.h_f);
    let mut trace = SolveTrace::new();
    if config.f_star.is_none() {
        trace.flag("region test uses the decrement surrogate");
    }
    let mut x = x0.clone();
    let mut k = 0;
    loop {
        let (mut rec, lambda) = cubic_record(oracle, &x, k)?;
        let inside = in_cubic_region(oracle, rec.value, lambda, config.f_star);
        if inside && trace.region_entry.is_none() {
            trace.region_entry = Some(k);
        }
        let done = match config.finish_tol {
            Some(tol) => lambda <= tol,
            None => inside,
        };
        if done || k >= config.max_iters {
            rec.stage = Stage::Final;
            trace.records.push(rec);
            trace.status = if done { Status::Converged } else { Status::MaxIterations };
            return Ok((x, trace));
        }
        let step = if m > 0.0 {
            cubic_step(oracle, &x, m, &oracle.metric)?
        } else {
            let model = LocalModel::at(oracle, &x)?;
            let d = model.newton_direction()?;
            let r = oracle.metric_norm(&d);
            CubicStep { next: &x - d, r, model_decrease: 0.5 * lambda * lambda, secular_residual: 0.0, evaluations: 0 }
        };
        rec.step_norm = step.r;
        trace.records.push(rec);
        x = step.next;
        k += 1;
    }
}

/// Estimate of `c` in `f(x_k) - f* <= c H_f ||x_0 - x*||^3 / k^p` from one run:
/// the largest ratio over the recorded iterates.
pub fn calibrate_rate_constant(
    oracle: &LipschitzStrongOracle,
    x0: &Vector,
    x_star: &Vector,
    f_star: f64,
    p: f64,
    iters: usize,
) -> Result<f64> {
    let r0 = oracle.metric_norm(&(x0 - x_star));
    let scale = oracle.h_f * r0.powi(3);
    if !(scale > 0.0) {
        return Ok(0.0);
    }
    let mut x = x0.clone();
    let mut c = 0.0f64;
    for k in 1..=iters {
        x = cubic_step(oracle, &x, oracle.h_f, &oracle.metric)?.next;
        let gap = (oracle.value(&x)? - f_star).max(0.0);
        c = c.max(gap * (k as f64).powf(p) / scale);
        if gap == 0.0 {
            break;
        }
    }
    Ok(c)
}

/// Stage lengths `t_k = ceil(k_p / 2^{(k-1)/(2p)})` of the restart scheme.
#[derive(Debug, Clone, Serialize)]
pub struct RestartPlan {
    pub p: f64,
    pub c: f64,
    pub k_p: usize,
    pub stage_lengths: Vec<usize>,
    /// `1/(8 M_f^2)`.
    pub target: f64,
}

/// Stages precomputed by a plan; the run fails beyond this.
pub const MAX_STAGES: usize = 64;

impl RestartPlan {
    /// `k_p` is the least integer with `2^{5/2} c M_f gap^{3/2} / k^p <= gap/2`,
    /// where `gap = f(x_0) - f~` for a lower bound `f~ <= f*`.
    pub fn new(p: f64, c: f64, m_f: f64, gap: f64) -> Result<Self> {
        if !(p > 0.0) || !(c >= 0.0) || !(gap >= 0.0) {
            return Err(Error::InvalidArgument(format!("invalid plan inputs p={p}, c={c}, gap={gap}")));
        }
        let raw = (2f64.powf(3.5) * c * m_f * gap.sqrt()).powf(1.0 / p);
        let k_p = (raw.ceil() as usize).max(1);
        let target = if m_f > 0.0 { 1.0 / (8.0 * m_f * m_f) } else { f64::INFINITY };
        Ok(Self::with_kp(p, k_p, target).with_constant(c))
    }

    pub fn with_kp(p: f64, k_p: usize, target: f64) -> Self {
        let stage_lengths =
            (1..=MAX_STAGES).map(|k| ((k_p as f64) / 2f64.powf((k as f64 - 1.0) / (2.0 * p))).ceil() as usize).collect();
        RestartPlan { p, c: f64::NAN, k_p, stage_lengths, target }
    }

    fn with_constant(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    /// `4 + log2(Delta)` with `Delta = M_f^2 (f(x_0) - f*)`.
    pub fn stage_bound(delta: f64) -> f64 {
        4.0 + delta.log2()
    }

    /// `4 + log2(Delta) + k_p 2^{1/(2p)} / (2^{1/(2p)} - 1)`.
    pub fn iteration_bound(&self, delta: f64) -> f64 {
        let q = 2f64.powf(1.0 / (2.0 * self.p));
        Self::stage_bound(delta) + self.k_p as f64 * q / (q - 1.0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub index: usize,
    pub length: usize,
    pub start_value: f64,
    pub end_value: f64,
}

#[derive(Debug, Clone)]
pub struct MultistageReport {
    pub x: Vector,
    pub plan: RestartPlan,
    pub stages: Vec<StageRecord>,
    pub total_iterations: usize,
    pub trace: SolveTrace,
}

impl MultistageReport {
    /// Whether `f(y_k) - f* <= 2^{-k} (f(y_0) - f*)` at every stage end.
    pub fn halving_holds(&self, f_star: f64) -> bool {
        let Some(first) = self.stages.first() else { return true };
        let gap0 = first.start_value - f_star;
        self.stages
            .iter()
            .all(|s| s.end_value - f_star <= gap0 * 0.5f64.powi(s.index as i32) + 1e-12 * (1.0 + f_star.abs()))
    }
}

/// Restarted cubic Newton: stages of `t_k` steps until a stage ends in the
/// quadratic region. `f_lower` is a lower bound on `f*`; `f_star`, when
/// known, is used for the region test.
pub fn multistage_solve(
    oracle: &LipschitzStrongOracle,
    x0: &Vector,
    c: f64,
    f_lower: f64,
    f_star: Option<f64>,
) -> Result<MultistageReport> {
    let p = 2.0;
    let f0 = oracle.value(x0)?;
    let plan = RestartPlan::new(p, c, oracle.m_f(), (f0 - f_lower).max(0.0))?;
    let mut trace = SolveTrace::new();
    if f_star.is_none() {
        trace.flag("region test uses the decrement surrogate");
    }
    let mut x = x0.clone();
    let mut stages = Vec::new();
    let mut total = 0;
    let (rec, lambda) = cubic_record(oracle, &x, 0)?;
    let mut inside = in_cubic_region(oracle, rec.value, lambda, f_star);
    let mut start_value = rec.value;
    trace.records.push(rec);
    for (i, &len) in plan.stage_lengths.iter().enumerate() {
        if inside {
            break;
        }
        for _ in 0..len {
            x = cubic_step(oracle, &x, oracle.h_f, &oracle.metric)?.next;
            total += 1;
            let (mut rec, _) = cubic_record(oracle, &x, total)?;
            rec.restart = Some(i as u32 + 1);
            trace.records.push(rec);
        }
        let (_, lambda) = cubic_record(oracle, &x, total)?;
        let end_value = oracle.value(&x)?;
        inside = in_cubic_region(oracle, end_value, lambda, f_star);
        stages.push(StageRecord { index: i + 1, length: len, start_value, end_value });
        start_value = end_value;
    }
    if !inside {
        return Err(Error::RootFinding(format!("restart scheme exceeded {MAX_STAGES} stages")));
    }
    trace.status = Status::Converged;
    trace.region_entry = Some(total);
    if let Some(last) = trace.records.last_mut() {
        last.stage = Stage::Final;
    }
    Ok(MultistageReport { x, plan, stages, total_iterations: total, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::Quadratic;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn cubic_step_on_half_square() {
        let f = Quadratic::new(DMatrix::from_element(1, 1, 1.0), DVector::zeros(1)).unwrap();
        let step = cubic_step(&f, &DVector::from_element(1, 1.0), 6.0, &SpdMatrix::identity(1)).unwrap();
        let expected = 1.0 + (1.0 - 13f64.sqrt()) / 6.0;
        assert!((step.next[0] - expected).abs() < 1e-12);
        assert!(step.model_decrease >= 0.0);
    }

    #[test]
    fn stationary_point_is_fixed() {
        let f = Quadratic::new(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        let step = cubic_step(&f, &DVector::zeros(2), 1.0, &SpdMatrix::identity(2)).unwrap();
        assert_eq!(step.r, 0.0);
    }

    #[test]
    fn plan_lengths() {
        let plan = RestartPlan::with_kp(2.0, 10, 1.0);
        assert_eq!(&plan.stage_lengths[..4], &[10, 9, 8, 6]);
        assert!(plan.stage_lengths.windows(2).all(|w| w[1] <= w[0] && w[1] > 0));
    }

    #[test]
    fn constants_from_lipschitz() {
        assert_eq!(sc_constant_from_lipschitz(1.0, 2.0).unwrap(), 1.0);
        assert_eq!(sc_constant_from_lipschitz(4.0, 2.0).unwrap(), 0.125);
        assert_eq!(sc_constant_from_lipschitz(3.0, 0.0).unwrap(), 0.0);
        assert!(sc_constant_from_lipschitz(0.0, 1.0).is_err());
    }
}

//! Path-following for linear objectives over the domain of a self-concordant
//! barrier.
//!
//! The primal scheme follows the minimizers of `t <c, x> + F(x)` as `t`
//! grows. The dual scheme solves `max -<c, x>` s.t. `B x = 0`, `x` in `Q`, by
//! following `u_sigma = argmin { F_*(A^T u) : <b, u> = sigma }` with
//! `A = [-c^T; B]` and `b = e_1`, and recovers interior primal points from the
//! dual iterates.

use std::sync::Arc;
use std::time::Duration;

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::linops::LocalGeometry;
use crate::lp::independent_rows;
use crate::oracle::{shifted_oracle, Barrier, Conjugate, LinearComposition, LocalModel, Matrix, ScOracle, Vector};
use crate::scalar::{PathConstants, Variant};
use crate::trace::{Clock, IterRecord, SolveTrace, Stage, Status};

fn within(residual: f64, bound: f64) -> bool {
    residual <= bound * (1.0 + 1e-9) + 1e-13
}

fn validate(consts: &PathConstants) -> Result<PathConstants> {
    if consts.variant != Variant::BarrierPc {
        return Err(Error::InvalidConstants(format!("expected barrier constants, got {:?}", consts.variant)));
    }
    consts.validate().into_result()
}

#[derive(Clone)]
pub struct PrimalBarrierProblem {
    pub barrier: Arc<dyn Barrier>,
    pub c: Vector,
    pub consts: PathConstants,
}

impl std::fmt::Debug for PrimalBarrierProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PrimalBarrierProblem").field("nu", &self.barrier.nu()).field("c", &self.c).finish()
    }
}

impl PrimalBarrierProblem {
    pub fn new(barrier: Arc<dyn Barrier>, c: Vector) -> Result<Self> {
        check_dim(barrier.dim(), c.len())?;
        Ok(PrimalBarrierProblem { barrier, c, consts: PathConstants::BARRIER_PC })
    }

    /// `||F'(x) + t c||*_x`.
    pub fn residual(&self, t: f64, x: &Vector) -> Result<f64> {
        let model = LocalModel::at(self.barrier.as_ref(), x)?;
        model.geometry.dual_norm(&(&model.gradient + &self.c * t))
    }

    /// `(nu + (beta + sqrt(nu)) beta / (1 - beta)) / t`; bounds
    /// `|<c, x> - <c, x*>|` at any centered `(t, x)`.
    pub fn certificate(&self, t: f64) -> f64 {
        let nu = self.barrier.nu();
        let beta = self.consts.beta;
        if t <= 0.0 {
            return f64::INFINITY;
        }
        (nu + (beta + nu.sqrt()) * beta / (1.0 - beta)) / t
    }

    /// Minimizer of `t <c, x> + F(x)` to high accuracy, from an interior `x`.
    pub fn central_point(&self, t: f64, start: &Vector) -> Result<Vector> {
        let f = shifted_oracle(self.barrier.as_ref(), self.c.clone(), t)?;
        let cfg = crate::newton::NewtonConfig { finish_tol: Some(1e-13), ..Default::default() };
        Ok(crate::newton::dnm_solve(&f, start, &cfg)?.0)
    }
}

/// One primal predictor-corrector iteration from a centered `(t, x)`.
pub fn primal_pc_iterate(prob: &PrimalBarrierProblem, t: f64, x: &Vector) -> Result<(f64, Vector)> {
    let consts = validate(&prob.consts)?;
    let f = prob.barrier.as_ref();
    let model = LocalModel::at(f, x)?;
    let residual = model.geometry.dual_norm(&(&model.gradient + &prob.c * t))?;
    if !within(residual, consts.beta) {
        return Err(Error::NotCentered { residual, bound: consts.beta });
    }
    let step = primal_step(f, &model, &prob.c, t, consts.gamma)?;
    if !within(step.residual, consts.beta) {
        return Err(Error::CenteringViolated { residual: step.residual, bound: consts.beta });
    }
    Ok((step.t, step.x))
}

struct PrimalStep {
    t: f64,
    x: Vector,
    residual: f64,
    c_norm: f64,
    model: LocalModel,
}

fn primal_step(f: &dyn Barrier, model: &LocalModel, c: &Vector, t: f64, gamma: f64) -> Result<PrimalStep> {
    let c_norm = model.geometry.dual_norm(c)?;
    if !(c_norm > 0.0) {
        return Err(Error::InvalidArgument("objective has zero local norm".into()));
    }
    let tau = gamma / c_norm;
    let t_next = t + tau;
    let y = &model.x - model.geometry.solve(c)? * tau;
    if !f.in_domain(&y) {
        return Err(Error::OutsideDomain);
    }
    let at_y = LocalModel::at(f, &y)?;
    let x = &y - at_y.geometry.solve(&(&at_y.gradient + c * t_next))?;
    if !f.in_domain(&x) {
        return Err(Error::OutsideDomain);
    }
    let next = LocalModel::at(f, &x)?;
    let residual = next.geometry.dual_norm(&(&next.gradient + c * t_next))?;
    Ok(PrimalStep { t: t_next, x, residual, c_norm, model: next })
}

#[derive(Debug, Clone, Default)]
pub struct BarrierConfig {
    pub max_iters: Option<usize>,
    pub time_limit: Option<Duration>,
    /// Centered starting pair; skips the centering run.
    pub start: Option<(f64, Vector)>,
    /// Interior point used when the barrier has no known analytic center.
    pub interior_point: Option<Vector>,
}

#[derive(Debug, Clone)]
pub struct PrimalSolution {
    pub x: Vector,
    pub t: f64,
    pub certificate: f64,
    pub trace: SolveTrace,
    /// Damped Newton steps spent reaching `||F'(x_0)||*_{x_0} <= beta`.
    pub centering_steps: usize,
}

/// Damped Newton on `F` until `||F'(x)||*_x <= beta`.
fn center(f: &dyn Barrier, start: &Vector, beta: f64) -> Result<(Vector, usize)> {
    let mut x = start.clone();
    for k in 0..1000 {
        let model = LocalModel::at(f, &x)?;
        let lam = model.lambda()?;
        if lam <= beta {
            return Ok((x, k));
        }
        x -= model.newton_direction()? / (1.0 + lam);
    }
    Err(Error::RootFinding("centering run did not reach the start condition".into()))
}

/// Primal predictor-corrector path-following until the certificate drops to `eps`.
pub fn primal_pc_solve(prob: &PrimalBarrierProblem, eps: f64, config: &BarrierConfig) -> Result<PrimalSolution> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("accuracy must be positive, got {eps}")));
    }
    let consts = validate(&prob.consts)?;
    let f = prob.barrier.as_ref();
    let (mut t, mut x, centering_steps) = match &config.start {
        Some((t0, x0)) => (*t0, x0.clone(), 0),
        None => {
            let start = config
                .interior_point
                .clone()
                .or_else(|| f.analytic_center())
                .ok_or_else(|| Error::InvalidArgument("need an interior starting point".into()))?;
            let (x0, k) = center(f, &start, consts.beta)?;
            (0.0, x0, k)
        }
    };
    let mut model = LocalModel::at(f, &x)?;
    let mut residual = model.geometry.dual_norm(&(&model.gradient + &prob.c * t))?;
    if !within(residual, consts.beta) {
        return Err(Error::NotCentered { residual, bound: consts.beta });
    }
    let growth = 1.0 + consts.gamma / (consts.beta + f.nu().sqrt());
    let max_iters = config.max_iters.unwrap_or(100_000);
    let clock = Clock::start(config.time_limit);
    let mut trace = SolveTrace::new();
    let mut k = 0;
    loop {
        let cert = prob.certificate(t);
        let mut rec = IterRecord::new(k, residual, prob.c.dot(&x), Stage::PredictorCorrector);
        rec.t = Some(t);
        rec.residual = Some(residual);
        rec.elapsed = clock.elapsed();
        let status = if cert <= eps {
            Some(Status::Converged)
        } else if k >= max_iters {
            Some(Status::MaxIterations)
        } else if clock.expired() {
            Some(Status::TimeLimit)
        } else {
            None
        };
        if let Some(status) = status {
            rec.stage = Stage::Final;
            trace.records.push(rec);
            trace.status = status;
            return Ok(PrimalSolution { x, t, certificate: cert, trace, centering_steps });
        }
        let step = primal_step(f, &model, &prob.c, t, consts.gamma)?;
        if !within(step.residual, consts.beta) {
            return Err(Error::CenteringViolated { residual: step.residual, bound: consts.beta });
        }
        if t > 0.0 && step.t < t * growth * (1.0 - 1e-12) {
            trace.flag("parameter growth below 1 + gamma/(beta + sqrt(nu))");
        }
        rec.c_norm = Some(step.c_norm);
        rec.gamma = Some(consts.gamma);
        rec.step_norm = model.geometry.primal_norm(&(&step.x - &x))?;
        trace.records.push(rec);
        t = step.t;
        x = step.x;
        residual = step.residual;
        model = step.model;
        k += 1;
    }
}

type DualOracle = LinearComposition<Conjugate<Arc<dyn Barrier>>>;

/// `max -<c, x>` s.t. `B x = 0`, `x` in `Q`, with `0` interior to `Q` and
/// `F'(0) = 0`.
#[derive(Clone)]
pub struct DualBarrierProblem {
    pub barrier: Arc<dyn Barrier>,
    pub b_matrix: Matrix,
    pub c: Vector,
    /// `[-c^T; B]` with dependent rows of `B` removed.
    pub a: Matrix,
    /// `e_1`.
    pub b: Vector,
    pub dropped_rows: Vec<usize>,
    pub consts: PathConstants,
    phi: DualOracle,
}

impl std::fmt::Debug for DualBarrierProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DualBarrierProblem").field("nu", &self.barrier.nu()).field("a", &self.a).finish()
    }
}

/// Local quantities of `Phi` at a dual point.
#[derive(Debug, Clone)]
pub struct DualPoint {
    pub u: Vector,
    pub model: LocalModel,
    /// `t(u)`.
    pub multiplier: f64,
    /// `lambda(u) = ||Phi'(u) - t(u) b||*_u`.
    pub lambda: f64,
}

/// `<b, H^{-1} g> / (||b||*)^2`, the `t` minimizing `||g - t b||*` in the
/// metric of `geometry`.
pub fn path_multiplier(geometry: &LocalGeometry, gradient: &Vector, b: &Vector) -> Result<f64> {
    let hb = geometry.solve(b)?;
    let bb = b.dot(&hb);
    if !(bb > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(hb.dot(gradient) / bb)
}

impl DualBarrierProblem {
    pub fn new(barrier: Arc<dyn Barrier>, b_matrix: Matrix, c: Vector) -> Result<Self> {
        let n = barrier.dim();
        check_dim(n, c.len())?;
        check_dim(n, b_matrix.ncols())?;
        let zero = DVector::zeros(n);
        if !barrier.in_domain(&zero) {
            return Err(Error::InvalidArgument("the origin must be interior to the barrier domain".into()));
        }
        let g0 = barrier.gradient(&zero)?;
        if g0.amax() > 1e-10 {
            return Err(Error::InvalidArgument("the barrier gradient must vanish at the origin".into()));
        }
        let m = b_matrix.nrows();
        let mut full = Matrix::zeros(m + 1, n);
        full.set_row(0, &(-c.transpose()));
        full.view_mut((1, 0), (m, n)).copy_from(&b_matrix);
        let mut rhs = DVector::zeros(m + 1);
        rhs[0] = 1.0;
        let (a, b, dropped) = independent_rows(&full, &rhs)?;
        if dropped.first() == Some(&0) || b.len() == 0 || b[0] != 1.0 {
            return Err(Error::InvalidArgument("objective lies in the span of the constraints".into()));
        }
        let dropped_rows = dropped.iter().map(|&r| r - 1).collect();
        let phi = LinearComposition::new(Conjugate::new(barrier.clone())?, a.clone())?;
        Ok(DualBarrierProblem { barrier, b_matrix, c, a, b, dropped_rows, consts: PathConstants::BARRIER_PC, phi })
    }

    /// `Phi(u) = F_*(A^T u)`.
    pub fn phi(&self) -> &dyn ScOracle {
        &self.phi
    }

    pub fn dual_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn point(&self, u: &Vector) -> Result<DualPoint> {
        let model = LocalModel::at(&self.phi, u)?;
        let multiplier = path_multiplier(&model.geometry, &model.gradient, &self.b)?;
        let lambda = model.geometry.dual_norm(&(&model.gradient - &self.b * multiplier))?;
        Ok(DualPoint { u: u.clone(), model, multiplier, lambda })
    }

    /// `x(u) = F_*'(A^T u)`.
    pub fn primal_point(&self, u: &Vector) -> Result<Vector> {
        self.phi.inner.argmax(&self.a.tr_mul(u))
    }

    /// `||u||_u`, at most `sqrt(nu)`.
    pub fn local_norm(&self, u: &Vector) -> Result<f64> {
        let model = LocalModel::at(&self.phi, u)?;
        model.geometry.primal_norm(u)
    }

    /// `(nu + 2 beta (1 - beta) sqrt(nu) / (1 - 2 beta)) / sigma`; bounds
    /// `|alpha* - t(u)|` at a centered `u` with `<b, u> = sigma`.
    pub fn certificate(&self, sigma: f64) -> f64 {
        let nu = self.barrier.nu();
        let beta = self.consts.beta;
        if sigma <= 0.0 {
            return f64::INFINITY;
        }
        (nu + 2.0 * beta * (1.0 - beta) * nu.sqrt() / (1.0 - 2.0 * beta)) / sigma
    }
}

pub fn dual_t_of_u(prob: &DualBarrierProblem, u: &Vector) -> Result<f64> {
    Ok(prob.point(u)?.multiplier)
}

fn dual_step(prob: &DualBarrierProblem, at: &DualPoint, gamma: f64) -> Result<(f64, DualPoint, f64)> {
    let geometry = &at.model.geometry;
    let b_norm = geometry.dual_norm(&prob.b)?;
    let v = &at.u + geometry.solve(&prob.b)? * (gamma / b_norm);
    let sigma = prob.b.dot(&v);
    let pv = prob.point(&v)?;
    let u = &v - pv.model.geometry.solve(&(&pv.model.gradient - &prob.b * pv.multiplier))?;
    Ok((sigma, prob.point(&u)?, b_norm))
}

/// One dual predictor-corrector iteration from `u` with `lambda(u) <= beta`.
/// `sigma` equals `<b, u>` and is carried only for symmetry with the solver.
pub fn dual_pc_iterate(prob: &DualBarrierProblem, _sigma: f64, u: &Vector) -> Result<(f64, Vector)> {
    let consts = validate(&prob.consts)?;
    let at = prob.point(u)?;
    if !within(at.lambda, consts.beta) {
        return Err(Error::NotCentered { residual: at.lambda, bound: consts.beta });
    }
    let (sigma_next, next, _) = dual_step(prob, &at, consts.gamma)?;
    if !within(next.lambda, consts.beta) {
        return Err(Error::CenteringViolated { residual: next.lambda, bound: consts.beta });
    }
    Ok((sigma_next, next.u))
}

/// `argmin { ||x - x(u)||_{x(u)} : A x = t(u) b }`.
pub fn recover_primal(prob: &DualBarrierProblem, u: &Vector) -> Result<Vector> {
    let t = dual_t_of_u(prob, u)?;
    let x = prob.primal_point(u)?;
    project_affine(prob.barrier.as_ref(), &prob.a, &(&prob.b * t), &x)
}

/// Projection of an interior `x` onto `{A z = rhs}` in the local norm of `F`
/// at `x`, with one refinement pass.
pub(crate) fn project_affine(f: &dyn ScOracle, a: &Matrix, rhs: &Vector, x: &Vector) -> Result<Vector> {
    let geometry = LocalGeometry::from_matrix(f.evaluate(x)?.hessian)?;
    let hinv_at = geometry.solve_matrix(&a.transpose())?;
    let reduced = LocalGeometry::from_matrix(a * &hinv_at).map_err(|_| Error::RankDeficient(Vec::new()))?;
    let mut out = x.clone();
    for _ in 0..2 {
        let r = a * &out - rhs;
        out -= &hinv_at * reduced.solve(&r)?;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct DualSolution {
    /// `t(u_N)`, the estimate of the optimal value of `max -<c, x>`.
    pub alpha: f64,
    pub x: Vector,
    pub u: Vector,
    pub sigma: f64,
    pub certificate: f64,
    pub trace: SolveTrace,
}

/// Dual predictor-corrector path-following from `(0, 0)` until the
/// certificate drops to `eps`.
pub fn dual_pc_solve(prob: &DualBarrierProblem, eps: f64, config: &BarrierConfig) -> Result<DualSolution> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("accuracy must be positive, got {eps}")));
    }
    let consts = validate(&prob.consts)?;
    let growth = 1.0 + consts.gamma / prob.barrier.nu().sqrt();
    let max_iters = config.max_iters.unwrap_or(100_000);
    let clock = Clock::start(config.time_limit);
    let mut trace = SolveTrace::new();
    let mut sigma = 0.0;
    let mut at = prob.point(&DVector::zeros(prob.dual_dim()))?;
    if !within(at.lambda, consts.beta) {
        return Err(Error::NotCentered { residual: at.lambda, bound: consts.beta });
    }
    let mut k = 0;
    loop {
        let cert = prob.certificate(sigma);
        let mut rec = IterRecord::new(k, at.lambda, at.model.value, Stage::PredictorCorrector);
        rec.t = Some(at.multiplier);
        rec.residual = Some(at.lambda);
        rec.elapsed = clock.elapsed();
        let status = if cert <= eps {
            Some(Status::Converged)
        } else if k >= max_iters {
            Some(Status::MaxIterations)
        } else if clock.expired() {
            Some(Status::TimeLimit)
        } else {
            None
        };
        if let Some(status) = status {
            rec.stage = Stage::Final;
            trace.records.push(rec);
            trace.status = status;
            let x = recover_primal(prob, &at.u)?;
            return Ok(DualSolution { alpha: at.multiplier, x, u: at.u, sigma, certificate: cert, trace });
        }
        let (sigma_next, next, b_norm) = dual_step(prob, &at, consts.gamma)?;
        if !within(next.lambda, consts.beta) {
            return Err(Error::CenteringViolated { residual: next.lambda, bound: consts.beta });
        }
        if sigma > 0.0 && sigma_next < sigma * growth * (1.0 - 1e-12) {
            trace.flag("parameter growth below 1 + gamma/sqrt(nu)");
        }
        rec.c_norm = Some(b_norm);
        rec.gamma = Some(consts.gamma);
        rec.step_norm = at.model.geometry.primal_norm(&(&next.u - &at.u))?;
        trace.records.push(rec);
        sigma = sigma_next;
        at = next;
        k += 1;
    }
}

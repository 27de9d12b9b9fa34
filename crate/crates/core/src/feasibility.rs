//! Finding `x` in `Q` with `A x = b` by minimizing a barrier of `Q` on the
//! affine set, solved through the dual `Phi~(y) = F_*(A^T y) - <b, y>`.
//!
//! The barrier is assumed normalized so that `F(0) = 0` and `F'(0) = 0`.
//! Also provides the exact dual path-following comparison scheme, the
//! feasibility depth by bisection, and the reduction of a standard-form LP.

use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::barrier::path_multiplier;
use crate::functions::{BoxBarrier, SimplexBarrier};
use crate::lp::{lp_to_feasibility, LpData, LpPair, SelfDualEmbedding};
use crate::oracle::{
    shifted_oracle, Barrier, Conjugate, LinearComposition, LocalModel, Matrix, ScOracle, Shifted, Shrunk, Translated,
    Vector,
};
use crate::pathfollow::{pfs_solve, PathConfig, PathReport};
use crate::scalar::{omega, PathConstants};
use crate::trace::{Clock, IterRecord, SolveTrace, Stage, Status};

pub type DualObjective = Shifted<LinearComposition<Conjugate<Arc<dyn Barrier>>>>;

#[derive(Clone)]
pub struct FeasibilityInstance {
    pub barrier: Arc<dyn Barrier>,
    pub a: Matrix,
    pub b: Vector,
    pub eps_depth: Option<f64>,
}

impl std::fmt::Debug for FeasibilityInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeasibilityInstance")
            .field("nu", &self.barrier.nu())
            .field("a", &self.a)
            .field("b", &self.b)
            .field("eps_depth", &self.eps_depth)
            .finish()
    }
}

impl FeasibilityInstance {
    pub fn new(barrier: Arc<dyn Barrier>, a: Matrix, b: Vector) -> Result<Self> {
        check_dim(barrier.dim(), a.ncols())?;
        check_dim(a.nrows(), b.len())?;
        let zero = DVector::zeros(barrier.dim());
        let e = barrier.evaluate(&zero)?;
        if e.value.abs() > 1e-9 || e.gradient.amax() > 1e-9 {
            return Err(Error::InvalidArgument("barrier must satisfy F(0) = 0 and F'(0) = 0".into()));
        }
        Ok(FeasibilityInstance { barrier, a, b, eps_depth: None })
    }

    pub fn with_depth(mut self, eps: f64) -> Self {
        self.eps_depth = Some(eps);
        self
    }

    /// Box `[-1, 1]^n` cut by `<e, x> / sqrt(n) = (1 - eps) sqrt(n)`; the depth is
    /// exactly `eps`.
    pub fn box_slab(n: usize, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidArgument(format!("depth must lie in (0, 1), got {eps}")));
        }
        let root = (n as f64).sqrt();
        let a = DMatrix::from_element(1, n, 1.0 / root);
        let b = DVector::from_element(1, (1.0 - eps) * root);
        Ok(Self::new(Arc::new(BoxBarrier { n }), a, b)?.with_depth(eps))
    }

    pub fn nu(&self) -> f64 {
        self.barrier.nu()
    }

    pub fn dual_objective(&self) -> Result<DualObjective> {
        let phi = LinearComposition::new(Conjugate::new(self.barrier.clone())?, self.a.clone())?;
        shifted_oracle(phi, -self.b.clone(), 1.0)
    }

    /// `x(y) = F_*'(A^T y)`.
    pub fn primal_point(&self, dual: &DualObjective, y: &Vector) -> Result<Vector> {
        dual.base.inner.argmax(&self.a.tr_mul(y))
    }

    pub fn constraint_residual(&self, x: &Vector) -> f64 {
        (&self.a * x - &self.b).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FeasSolver {
    Dnm,
    Pfs,
}

impl FromStr for FeasSolver {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dnm" => Ok(FeasSolver::Dnm),
            "pfs" => Ok(FeasSolver::Pfs),
            other => Err(Error::InvalidArgument(format!("unknown feasibility solver '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeasConfig {
    /// Bound on `||A x - b||`.
    pub residual_tol: f64,
    /// Bound on `||Phi~'(y)||*_y`; `None` stops on the residual alone, which
    /// is needed when the feasible set has empty interior.
    pub gradient_tol: Option<f64>,
    pub max_iters: usize,
    pub time_limit: Option<Duration>,
}

impl Default for FeasConfig {
    fn default() -> Self {
        FeasConfig { residual_tol: 1e-8, gradient_tol: Some(1e-8), max_iters: 10_000, time_limit: None }
    }
}

#[derive(Debug, Clone)]
pub struct FeasSolution {
    pub x: Vector,
    pub y: Vector,
    pub residual: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Iterations before the first dual iterate with `lambda <= 1/2`.
    pub region_entry: Option<usize>,
    pub trace: SolveTrace,
    pub path: Option<PathReport>,
}

impl FeasSolution {
    pub fn converged(&self) -> bool {
        self.trace.status == Status::Converged
    }
}

/// Minimizes the dual from `y = 0` with damped Newton or path-following and
/// recovers `x = F_*'(A^T y)`.
pub fn feasibility_via_dual(inst: &FeasibilityInstance, solver: FeasSolver, config: &FeasConfig) -> Result<FeasSolution> {
    let dual = inst.dual_objective()?;
    let y0 = DVector::zeros(inst.a.nrows());
    match solver {
        FeasSolver::Dnm => dual_newton(inst, &dual, y0, config),
        FeasSolver::Pfs => {
            let path_cfg = PathConfig {
                max_iters: config.max_iters,
                finish_tol: Some(config.gradient_tol.unwrap_or(1e-10).min(1e-10)),
                time_limit: config.time_limit,
                initial_gamma: None,
            };
            let (y, report) = pfs_solve(&dual, &y0, &PathConstants::PFS, &path_cfg)?;
            let mut sol = dual_newton(inst, &dual, y, &FeasConfig { max_iters: 20, ..config.clone() })?;
            sol.region_entry = Some(report.outside_region());
            sol.iterations += report.trace.iterations();
            sol.trace = SolveTrace { records: report.trace.records.clone(), ..sol.trace };
            sol.path = Some(report);
            Ok(sol)
        }
    }
}

fn dual_newton(inst: &FeasibilityInstance, dual: &DualObjective, mut y: Vector, config: &FeasConfig) -> Result<FeasSolution> {
    let clock = Clock::start(config.time_limit);
    let mut trace = SolveTrace::new();
    let mut k = 0;
    let mut last: Option<(Vector, IterRecord)> = None;
    loop {
        let model = match LocalModel::at(dual, &y) {
            Ok(model) => model,
            Err(Error::NotPositiveDefinite | Error::RootFinding(_)) if last.is_some() => {
                // the dual Hessian degenerates as y runs off to infinity
                let (prev, mut rec) = last.take().expect("checked");
                rec.stage = Stage::Final;
                if let Some(r) = trace.records.last_mut() {
                    *r = rec;
                }
                trace.status = Status::Stalled;
                trace.flag("dual Hessian became singular; returning the last regular iterate");
                return finish(inst, dual, prev, k - 1, trace);
            }
            Err(e) => return Err(e),
        };
        let lam = model.lambda()?;
        let residual = model.gradient.norm();
        if trace.region_entry.is_none() && lam <= 0.5 {
            trace.region_entry = Some(k);
        }
        let mut rec = IterRecord::new(k, lam, model.value, Stage::Final);
        rec.residual = Some(residual);
        rec.elapsed = clock.elapsed();
        let done = residual <= config.residual_tol && config.gradient_tol.is_none_or(|g| lam <= g);
        let status = if done {
            Some(Status::Converged)
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
            return finish(inst, dual, y, k, trace);
        }
        let d = model.newton_direction()?;
        let (stage, scale) = if lam <= 0.5 { (Stage::Standard, 1.0) } else { (Stage::Damped, 1.0 / (1.0 + lam)) };
        rec.stage = stage;
        rec.step_norm = lam * scale;
        trace.records.push(rec.clone());
        last = Some((y.clone(), rec));
        y -= d * scale;
        k += 1;
    }
}

fn finish(inst: &FeasibilityInstance, dual: &DualObjective, y: Vector, k: usize, trace: SolveTrace) -> Result<FeasSolution> {
    let x = inst.primal_point(dual, &y)?;
    let gradient_norm = trace.records.last().map_or(f64::NAN, |r| r.lambda);
    Ok(FeasSolution {
        residual: inst.constraint_residual(&x),
        x,
        y,
        gradient_norm,
        iterations: k,
        region_entry: trace.region_entry,
        trace,
        path: None,
    })
}

/// Run of the exact dual path-following scheme.
#[derive(Debug, Clone, Serialize)]
pub struct DualPathReport {
    pub sigmas: Vec<f64>,
    /// `alpha_sigma`, with `Phi'(y_sigma) = alpha_sigma b`.
    pub multipliers: Vec<f64>,
    pub iterations: usize,
    pub inner_steps: usize,
    /// Largest decrement at which an inner solve stopped.
    pub inner_floor: f64,
    #[serde(skip)]
    pub y: Vector,
    /// `x(y) / alpha`, which satisfies `A x = b`.
    #[serde(skip)]
    pub x: Vector,
}

/// Exact dual path-following: `sigma_+ = sigma + gamma ||b||*_y` and
/// `y_+ = argmin { Phi(z) : <b, z> = sigma_+ }`, where `Phi(y) = F_*(A^T y)`.
/// Stops at the first `sigma` whose multiplier reaches 1, which happens
/// exactly when `sigma >= <b, y*>`.
pub fn dual_pathfollow_exact(inst: &FeasibilityInstance, gamma: f64, max_iters: usize) -> Result<DualPathReport> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {gamma}")));
    }
    let phi = LinearComposition::new(Conjugate::new(inst.barrier.clone())?, inst.a.clone())?;
    let b = &inst.b;
    let mut y = DVector::zeros(inst.a.nrows());
    let mut sigma = 0.0;
    let mut report = DualPathReport {
        sigmas: vec![0.0],
        multipliers: vec![0.0],
        iterations: 0,
        inner_steps: 0,
        inner_floor: 0.0,
        y: y.clone(),
        x: DVector::zeros(inst.a.ncols()),
    };
    if b.amax() == 0.0 {
        return Ok(report);
    }
    let mut model = LocalModel::at(&phi, &y)?;
    for _ in 0..max_iters {
        let b_norm = model.geometry.dual_norm(b)?;
        sigma += gamma * b_norm;
        let mut z = &y + model.geometry.solve(b)? * (gamma / b_norm);
        let (mut at, mut alpha);
        let mut inner = 0;
        let mut prev = f64::INFINITY;
        loop {
            at = LocalModel::at(&phi, &z)?;
            alpha = path_multiplier(&at.geometry, &at.gradient, b)?;
            let g = &at.gradient - b * alpha;
            let lam = at.geometry.dual_norm(&g)?;
            // a small decrement that stops halving is at rounding level
            if lam <= 1e-10 || (lam <= 1e-5 && lam > 0.5 * prev) {
                report.inner_floor = report.inner_floor.max(lam);
                break;
            }
            prev = lam;
            if inner >= 200 {
                return Err(Error::RootFinding("inner path solve did not converge".into()));
            }
            let step = if lam <= 0.25 { 1.0 } else { 1.0 / (1.0 + lam) };
            z -= at.geometry.solve(&g)? * step;
            inner += 1;
        }
        report.inner_steps += inner;
        report.iterations += 1;
        report.sigmas.push(sigma);
        report.multipliers.push(alpha);
        y = z;
        model = at;
        if alpha >= 1.0 {
            let x = phi.inner.argmax(&phi.a.tr_mul(&y))? / alpha;
            report.x = x;
            report.y = y;
            return Ok(report);
        }
    }
    Err(Error::RootFinding(format!("dual path did not reach the solution in {max_iters} iterations")))
}

/// Largest `delta` with `(1 - delta) Q` meeting `{A x = b}`, by bisection.
/// Feasibility of a shrunk set is decided by damped Newton on its dual: a
/// decrement below 1 certifies a minimizer.
pub fn feasibility_depth(inst: &FeasibilityInstance, tol: f64) -> Result<f64> {
    let feasible = |delta: f64| -> Result<bool> {
        let shrunk: Arc<dyn Barrier> = Arc::new(Shrunk { base: inst.barrier.clone(), delta });
        let trial = FeasibilityInstance { barrier: shrunk, a: inst.a.clone(), b: inst.b.clone(), eps_depth: None };
        let dual = trial.dual_objective()?;
        let mut y = DVector::zeros(inst.a.nrows());
        for _ in 0..2000 {
            let model = match LocalModel::at(&dual, &y) {
                Ok(m) => m,
                Err(_) => return Ok(false),
            };
            let lam = model.lambda()?;
            if lam < 1.0 {
                return Ok(true);
            }
            y -= model.newton_direction()? / (1.0 + lam);
        }
        Ok(false)
    };
    if !feasible(0.0)? {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > tol * lo.max(tol) {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// The two depth inequalities at a computed minimizer `x*` of `F` on the affine set.
#[derive(Debug, Clone, Serialize)]
pub struct DepthCheck {
    pub inverse_depth: f64,
    /// `1 + <F'(x*), x*> / nu`, at most `1/eps`.
    pub gradient_bound: f64,
    /// `F(x*) - F(0)`.
    pub objective: f64,
    /// `nu ln(1/eps)`.
    pub objective_bound: f64,
}

impl DepthCheck {
    pub fn ok(&self, tol: f64) -> bool {
        self.gradient_bound <= self.inverse_depth + tol && self.objective <= self.objective_bound + tol
    }
}

pub fn depth_check(inst: &FeasibilityInstance, x_star: &Vector, eps: f64) -> Result<DepthCheck> {
    let e = inst.barrier.evaluate(x_star)?;
    let nu = inst.nu();
    Ok(DepthCheck {
        inverse_depth: 1.0 / eps,
        gradient_bound: 1.0 + e.gradient.dot(x_star) / nu,
        objective: e.value,
        objective_bound: nu * (1.0 / eps).ln(),
    })
}

/// `<u, F_*''(u) u>` at `u = A^T y`; at most `nu` for every `y`.
pub fn conjugate_curvature(inst: &FeasibilityInstance, y: &Vector) -> Result<f64> {
    let conj = Conjugate::new(inst.barrier.clone())?;
    let u = inst.a.tr_mul(y);
    let e = conj.evaluate(&u)?;
    Ok(u.dot(&(e.hessian * &u)))
}

#[derive(Debug, Clone, Serialize)]
pub struct StrategyRow {
    pub method: &'static str,
    pub iterations: usize,
    /// Iterations before the quadratic region (`None` for the exact dual scheme).
    pub to_region: Option<usize>,
    /// Order of the complexity bound: `nu ln(1/eps)`, `sqrt(nu ln(1/eps))`, or
    /// `sqrt(nu) ln(nu/eps)`.
    pub predicted_order: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StrategyReport {
    pub nu: f64,
    pub eps: f64,
    pub rows: Vec<StrategyRow>,
}

/// Runs damped Newton, path-following and exact dual path-following on the
/// same instance concurrently. Needs a known depth.
pub fn strategy_comparison(inst: &FeasibilityInstance) -> Result<StrategyReport> {
    let eps = inst
        .eps_depth
        .ok_or_else(|| Error::InvalidArgument("strategy comparison needs a known feasibility depth".into()))?;
    let nu = inst.nu();
    let log = (1.0 / eps).ln();
    let cfg = FeasConfig::default();
    let (dnm, pfs, dpf) = std::thread::scope(|s| {
        let a = s.spawn(|| feasibility_via_dual(inst, FeasSolver::Dnm, &cfg));
        let b = s.spawn(|| feasibility_via_dual(inst, FeasSolver::Pfs, &cfg));
        let c = s.spawn(|| dual_pathfollow_exact(inst, PathConstants::BARRIER_PC.gamma, 100_000));
        (a.join(), b.join(), c.join())
    });
    let join = |r: std::thread::Result<Result<FeasSolution>>| r.unwrap_or_else(|_| Err(Error::RootFinding("solver panicked".into())));
    let dnm = join(dnm)?;
    let pfs = join(pfs)?;
    let dpf = dpf.unwrap_or_else(|_| Err(Error::RootFinding("solver panicked".into())))?;
    let rows = vec![
        StrategyRow {
            method: "dnm",
            iterations: dnm.iterations,
            to_region: dnm.region_entry,
            predicted_order: nu * log,
            residual: dnm.residual,
        },
        StrategyRow {
            method: "pfs",
            iterations: pfs.iterations,
            to_region: pfs.region_entry,
            predicted_order: (nu * log).sqrt(),
            residual: pfs.residual,
        },
        StrategyRow {
            method: "dual-path",
            iterations: dpf.iterations,
            to_region: None,
            predicted_order: nu.sqrt() * (nu / eps).ln(),
            residual: inst.constraint_residual(&dpf.x),
        },
    ];
    Ok(StrategyReport { nu, eps, rows })
}

/// Upper bound on damped Newton steps before the quadratic region of the
/// dual, `nu ln(1/eps) / omega(1/2)`.
pub fn dnm_feasibility_bound(nu: f64, eps: f64) -> f64 {
    nu * (1.0 / eps).ln() / omega(0.5).expect("constant argument")
}

/// The embedding of an LP with its feasibility instance over the simplex
/// barrier translated to its center.
#[derive(Debug, Clone)]
pub struct EmbeddedLp {
    pub embedding: SelfDualEmbedding,
    pub instance: FeasibilityInstance,
    pub center: Vector,
}

pub fn embed_lp(lp: &LpData) -> Result<EmbeddedLp> {
    let embedding = lp_to_feasibility(lp)?;
    let d = embedding.reduced_dim();
    let barrier = Translated::to_center(SimplexBarrier { n: d })?;
    let center = barrier.center.clone();
    let b = &embedding.reduced_b - &embedding.reduced_a * &center;
    let instance = FeasibilityInstance::new(Arc::new(barrier), embedding.reduced_a.clone(), b)?;
    Ok(EmbeddedLp { embedding, instance, center })
}

/// Outcome of solving an LP through its embedding.
#[derive(Debug, Clone)]
pub struct EmbeddedSolve {
    /// Pair mapped back from the feasibility solution as returned.
    pub raw: LpPair,
    /// Pair mapped back after the support-restricted residual correction.
    pub polished: LpPair,
    pub solution: FeasSolution,
}

/// Solves an LP through its self-dual embedding with damped Newton on the
/// dual, stopping on the constraint residual since the embedded set has no
/// interior.
pub fn solve_lp_via_embedding(lp: &LpData, residual_tol: f64, max_iters: usize) -> Result<EmbeddedSolve> {
    let emb = embed_lp(lp)?;
    let cfg = FeasConfig { residual_tol, gradient_tol: None, max_iters, time_limit: None };
    let solution = feasibility_via_dual(&emb.instance, FeasSolver::Dnm, &cfg)?;
    let z_bar = &solution.x + &emb.center;
    let raw = emb.embedding.map_back(&z_bar)?;
    let threshold = 1e-3 * solution.residual.max(1e-12).sqrt();
    let polished = emb.embedding.map_back(&emb.embedding.polish(&z_bar, threshold))?;
    Ok(EmbeddedSolve { raw, polished, solution })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rhs_is_solved_at_the_center() {
        let inst = FeasibilityInstance::new(Arc::new(BoxBarrier { n: 3 }), DMatrix::from_element(1, 3, 1.0), DVector::zeros(1))
            .unwrap();
        let sol = feasibility_via_dual(&inst, FeasSolver::Dnm, &FeasConfig::default()).unwrap();
        assert_eq!(sol.iterations, 0);
        assert!(sol.x.amax() < 1e-15);
    }

    #[test]
    fn slab_is_solved_by_both_solvers() {
        let inst = FeasibilityInstance::box_slab(4, 0.01).unwrap();
        for solver in [FeasSolver::Dnm, FeasSolver::Pfs] {
            let sol = feasibility_via_dual(&inst, solver, &FeasConfig::default()).unwrap();
            assert!(sol.converged());
            assert!(sol.residual <= 1e-8);
            assert!(sol.x.iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn exact_dual_path_lands_on_the_affine_set() {
        let inst = FeasibilityInstance::box_slab(2, 0.05).unwrap();
        let rep = dual_pathfollow_exact(&inst, 0.254, 10_000).unwrap();
        assert!(inst.constraint_residual(&rep.x) < 1e-9);
        assert!(rep.x.iter().all(|v| v.abs() < 1.0));
        assert!(rep.sigmas[rep.sigmas.len() - 2] <= inst.nu() / 0.05);
    }

    #[test]
    fn depth_of_slab_is_recovered() {
        let inst = FeasibilityInstance::box_slab(2, 0.1).unwrap();
        let eps = feasibility_depth(&inst, 1e-4).unwrap();
        assert!((eps - 0.1).abs() < 1e-4, "{eps}");
    }
}

//! Path-following for unconstrained self-concordant minimization.
//!
//! With `c = -f'(x_0)` the functions `f_t(x) = f(x) + t <c, x>` have
//! minimizers `x(t)` running from `x(1) = x_0` to `x(0) = x*`. A pair `(t, x)`
//! is centered when `||f'(x) + t c||*_x <= beta / M_f`. Each iteration lowers
//! `t` by `gamma / (M_f ||c||*_x)` and restores centering with one Newton step.

use std::time::Duration;

use crate::error::{Error, Result};
use crate::newton::{damped_from, standard_from};
use crate::oracle::{LocalModel, ScOracle, Vector};
use crate::scalar::{omega, omega_inverse, PathConstants, Variant};
use crate::trace::{Clock, IterRecord, SolveTrace, Stage, Status};

/// Values of `t` this close to zero are set to zero.
pub const T_FLOOR: f64 = 1e-15;
/// Smallest step tried by the adaptive plain scheme.
pub const PFS_GAMMA_FLOOR: f64 = 0.1125;

/// A point on (or near) the central path.
#[derive(Debug, Clone)]
pub struct CenteredPair {
    pub t: f64,
    pub x: Vector,
    /// `||f'(x) + t c||*_x`.
    pub residual: f64,
    /// `c = -f'(x_0)`.
    pub c: Vector,
}

impl CenteredPair {
    /// `(1, x_0)`, which is exactly centered.
    pub fn start(oracle: &dyn ScOracle, x0: &Vector) -> Result<Self> {
        let model = LocalModel::at(oracle, x0)?;
        Ok(CenteredPair { t: 1.0, x: x0.clone(), residual: 0.0, c: -model.gradient })
    }
}

/// `||f'(x) + t c||*_x`.
pub fn centering_residual(oracle: &dyn ScOracle, c: &Vector, t: f64, x: &Vector) -> Result<f64> {
    let model = LocalModel::at(oracle, x)?;
    residual_at(&model, c, t)
}

pub(crate) fn residual_at(model: &LocalModel, c: &Vector, t: f64) -> Result<f64> {
    model.geometry.dual_norm(&(&model.gradient + c * t))
}

/// Largest admissible centering residual `beta / M_f`, with a rounding allowance.
pub(crate) fn centering_bound(beta: f64, m_f: f64) -> f64 {
    if m_f > 0.0 {
        beta / m_f
    } else {
        f64::INFINITY
    }
}

pub(crate) fn is_centered(residual: f64, bound: f64) -> bool {
    residual <= bound * (1.0 + 1e-9) + 1e-13
}

/// Result of one path iteration computed from a known local model.
#[derive(Debug, Clone)]
pub(crate) struct PathStep {
    pub pair: CenteredPair,
    pub model: LocalModel,
    pub step_norm: f64,
}

pub(crate) fn next_t(t: f64, gamma: f64, m_f: f64, c_norm: f64) -> f64 {
    let dt = if m_f > 0.0 && c_norm > 0.0 { gamma / (m_f * c_norm) } else { f64::INFINITY };
    let t_new = t - dt;
    if t_new <= T_FLOOR {
        0.0
    } else {
        t_new
    }
}

/// `t_+ = t - gamma/(M_f ||c||*_x)`, `x_+ = x - f''(x)^{-1}(f'(x) + t_+ c)`.
pub(crate) fn pfs_step(oracle: &dyn ScOracle, model: &LocalModel, pair: &CenteredPair, gamma: f64) -> Result<PathStep> {
    let c_norm = model.geometry.dual_norm(&pair.c)?;
    let t = next_t(pair.t, gamma, oracle.sc_constant(), c_norm);
    let g = &model.gradient + &pair.c * t;
    let d = model.geometry.solve(&g)?;
    let step_norm = model.geometry.dual_norm(&g)?;
    let x = &model.x - d;
    if !oracle.in_domain(&x) {
        return Err(Error::OutsideDomain);
    }
    let next = LocalModel::at(oracle, &x)?;
    let residual = residual_at(&next, &pair.c, t)?;
    Ok(PathStep { pair: CenteredPair { t, x, residual, c: pair.c.clone() }, model: next, step_norm })
}

fn require_variant(consts: &PathConstants, variant: Variant) -> Result<()> {
    validate_for(consts, variant)?;
    Ok(())
}

pub(crate) fn validate_for(consts: &PathConstants, variant: Variant) -> Result<PathConstants> {
    crate::scalar::validate_constants(consts.beta, consts.gamma, variant).into_result()
}

fn check_input(model: &LocalModel, pair: &CenteredPair, bound: f64) -> Result<()> {
    let residual = residual_at(model, &pair.c, pair.t)?;
    if !is_centered(residual, bound) {
        return Err(Error::NotCentered { residual, bound });
    }
    Ok(())
}

pub(crate) fn check_output(pair: &CenteredPair, bound: f64) -> Result<()> {
    if !is_centered(pair.residual, bound) {
        return Err(Error::CenteringViolated { residual: pair.residual, bound });
    }
    Ok(())
}

/// One iteration of the plain path-following scheme.
pub fn pfs_iterate(oracle: &dyn ScOracle, pair: &CenteredPair, consts: &PathConstants) -> Result<CenteredPair> {
    require_variant(consts, Variant::Pfs)?;
    let bound = centering_bound(consts.beta, oracle.sc_constant());
    let model = LocalModel::at(oracle, &pair.x)?;
    check_input(&model, pair, bound)?;
    let step = pfs_step(oracle, &model, pair, consts.gamma)?;
    check_output(&step.pair, bound)?;
    Ok(step.pair)
}

/// Adaptive step: tries `gamma_i = 2^{1-i} gamma_prev`, `i = 0, 1, ...`, and
/// keeps the first one whose corrected point is centered. Steps below `floor`
/// are replaced by `floor`, which is always admissible.
#[derive(Debug, Clone)]
pub struct AdaptiveOutcome {
    pub pair: CenteredPair,
    pub gamma: f64,
    /// Index `i` of the accepted trial; `i + 1` Newton steps were spent.
    pub index: u32,
}

pub(crate) fn adaptive_search<F>(prev_gamma: f64, floor: f64, bound: f64, mut attempt: F) -> Result<(PathStep, f64, u32)>
where
    F: FnMut(f64) -> Result<PathStep>,
{
    let mut i = 0u32;
    loop {
        let proposal = prev_gamma * 2f64.powi(1 - i as i32);
        let gamma = proposal.max(floor);
        match attempt(gamma) {
            Ok(step) if is_centered(step.pair.residual, bound) => return Ok((step, gamma, i)),
            Ok(step) if gamma <= floor => {
                return Err(Error::CenteringViolated { residual: step.pair.residual, bound })
            }
            Err(e) if gamma <= floor => return Err(e),
            Ok(_) | Err(Error::OutsideDomain) | Err(Error::NotPositiveDefinite) => {}
            Err(e) => return Err(e),
        }
        i += 1;
    }
}

pub fn adaptive_pfs_iterate(oracle: &dyn ScOracle, pair: &CenteredPair, gamma_prev: f64) -> Result<AdaptiveOutcome> {
    let bound = centering_bound(PathConstants::PFS.beta, oracle.sc_constant());
    let model = LocalModel::at(oracle, &pair.x)?;
    check_input(&model, pair, bound)?;
    let (step, gamma, index) =
        adaptive_search(gamma_prev, PFS_GAMMA_FLOOR, bound, |g| pfs_step(oracle, &model, pair, g))?;
    Ok(AdaptiveOutcome { pair: step.pair, gamma, index })
}

#[derive(Debug, Clone)]
pub struct PathConfig {
    pub max_iters: usize,
    /// Decrement at which the finishing Newton steps stop. Defaults to `1e-10 / M_f`.
    pub finish_tol: Option<f64>,
    pub time_limit: Option<Duration>,
    /// Initial trial step of the adaptive variants.
    pub initial_gamma: Option<f64>,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig { max_iters: 100_000, finish_tol: None, time_limit: None, initial_gamma: None }
    }
}

/// Run of a path-following method.
#[derive(Debug, Clone)]
pub struct PathReport {
    pub trace: SolveTrace,
    pub constants: PathConstants,
    pub m_f: f64,
    /// Path iterations before the first iterate with `lambda <= 1/(2 M_f)`.
    pub path_iterations: usize,
    pub newton_steps: usize,
    pub adaptive: bool,
}

impl PathReport {
    pub fn f0(&self) -> f64 {
        self.trace.records[0].value
    }

    fn radius(&self) -> f64 {
        if self.m_f > 0.0 {
            0.5 / self.m_f
        } else {
            f64::INFINITY
        }
    }

    /// Number of leading iterates with `lambda >= 1/(2 M_f)`.
    pub fn outside_region(&self) -> usize {
        let r = self.radius();
        self.trace.records.iter().take_while(|rec| rec.lambda >= r && rec.t.is_some()).count()
    }

    pub fn t_values(&self) -> Vec<f64> {
        self.trace.records.iter().filter_map(|r| r.t).collect()
    }
}

pub(crate) struct StepChoice {
    pub step: PathStep,
    pub gamma: f64,
    pub tries: u32,
}

/// Shared driver: path iterations until `lambda <= 1/(2 M_f)`, then full
/// Newton steps on `f` until `lambda <= finish_tol`.
pub(crate) fn drive_path<F>(
    oracle: &dyn ScOracle,
    x0: &Vector,
    consts: PathConstants,
    config: &PathConfig,
    stage: Stage,
    adaptive: bool,
    mut step_fn: F,
) -> Result<(Vector, PathReport)>
where
    F: FnMut(&LocalModel, &CenteredPair) -> Result<StepChoice>,
{
    let m_f = oracle.sc_constant();
    let radius = if m_f > 0.0 { 0.5 / m_f } else { f64::INFINITY };
    let tol = config.finish_tol.unwrap_or(if m_f > 0.0 { 1e-10 / m_f } else { 1e-10 });
    let bound = centering_bound(consts.beta, m_f);
    let clock = Clock::start(config.time_limit);
    let mut trace = SolveTrace::new();
    let mut pair = CenteredPair::start(oracle, x0)?;
    let mut model = LocalModel::at(oracle, x0)?;
    let mut on_path = true;
    let mut path_iterations = 0;
    let mut newton_steps = 0;
    let mut stalls = 0;
    let mut k = 0;
    loop {
        let lam = model.lambda()?;
        if on_path && lam <= radius {
            on_path = false;
            path_iterations = k;
            trace.region_entry = Some(k);
        }
        let mut rec = IterRecord::new(k, lam, model.value, Stage::Final);
        rec.elapsed = clock.elapsed();
        if on_path || trace.region_entry == Some(k) {
            rec.t = Some(pair.t);
            rec.residual = Some(residual_at(&model, &pair.c, pair.t)?);
            rec.c_norm = Some(model.geometry.dual_norm(&pair.c)?);
        }
        let status = if !on_path && lam <= tol {
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
            if on_path {
                path_iterations = k;
            }
            trace.records.push(rec);
            trace.status = status;
            let report = PathReport { trace, constants: consts, m_f, path_iterations, newton_steps, adaptive };
            return Ok((model.x, report));
        }
        if on_path {
            let choice = step_fn(&model, &pair)?;
            check_output(&choice.step.pair, bound)?;
            rec.stage = stage;
            rec.step_norm = choice.step.step_norm;
            rec.tries = Some(choice.tries);
            rec.gamma = Some(choice.gamma);
            newton_steps += choice.tries as usize;
            trace.records.push(rec);
            pair = choice.step.pair;
            model = choice.step.model;
        } else {
            let mut step = standard_from(&model)?;
            rec.stage = Stage::Standard;
            if !oracle.in_domain(&step.next) {
                step = damped_from(&model, m_f)?;
                rec.stage = Stage::DampedFallback;
                trace.flag("standard step left the domain; damped fallback used");
            }
            rec.step_norm = step.step_norm;
            newton_steps += 1;
            trace.records.push(rec);
            let next = LocalModel::at(oracle, &step.next)?;
            if rec_is_stall(lam, &next)? {
                stalls += 1;
            } else {
                stalls = 0;
            }
            model = next;
        }
        k += 1;
    }
}

fn rec_is_stall(lam: f64, next: &LocalModel) -> Result<bool> {
    Ok(next.lambda()? >= 0.999 * lam)
}

/// Plain path-following from `(1, x_0)` followed by quadratic finishing.
pub fn pfs_solve(
    oracle: &dyn ScOracle,
    x0: &Vector,
    consts: &PathConstants,
    config: &PathConfig,
) -> Result<(Vector, PathReport)> {
    let consts = validate_for(consts, Variant::Pfs)?;
    drive_path(oracle, x0, consts, config, Stage::Path, false, |model, pair| {
        let step = pfs_step(oracle, model, pair, consts.gamma)?;
        Ok(StepChoice { step, gamma: consts.gamma, tries: 1 })
    })
}

/// Plain path-following with the adaptive step rule.
pub fn adaptive_pfs_solve(oracle: &dyn ScOracle, x0: &Vector, config: &PathConfig) -> Result<(Vector, PathReport)> {
    let consts = PathConstants::PFS;
    let bound = centering_bound(consts.beta, oracle.sc_constant());
    let mut gamma_prev = config.initial_gamma.unwrap_or(2.0 * PFS_GAMMA_FLOOR);
    drive_path(oracle, x0, consts, config, Stage::Path, true, |model, pair| {
        let (step, gamma, index) =
            adaptive_search(gamma_prev, PFS_GAMMA_FLOOR, bound, |g| pfs_step(oracle, model, pair, g))?;
        gamma_prev = gamma;
        Ok(StepChoice { step, gamma, tries: index + 1 })
    })
}

/// Outcome of checking a bound on every eligible iterate.
#[derive(Debug, Clone)]
pub struct BoundCheck {
    pub checked: usize,
    pub violations: usize,
    /// Largest `observed / bound`.
    pub worst_ratio: f64,
}

impl BoundCheck {
    fn new() -> Self {
        BoundCheck { checked: 0, violations: 0, worst_ratio: 0.0 }
    }

    fn record(&mut self, observed: f64, bound: f64) {
        self.checked += 1;
        let ratio = if bound > 0.0 { observed / bound } else if observed > 0.0 { f64::INFINITY } else { 0.0 };
        self.worst_ratio = self.worst_ratio.max(ratio);
        if observed > bound * (1.0 + 1e-10) + 1e-300 {
            self.violations += 1;
        }
    }

    pub fn ok(&self) -> bool {
        self.violations == 0
    }
}

/// `t_N <= exp(-rate N^2 / (M_f^2 (f(x_0) - f*)))` for every `N` whose iterates
/// `x_0..x_N` all lie outside the quadratic region. `rate` is
/// `gamma(gamma - 2 beta)/2` for the plain scheme and `kappa gamma` for the
/// predictor-corrector scheme.
pub fn rate_check(report: &PathReport, f_star: f64) -> BoundCheck {
    let c = &report.constants;
    let rate = match c.variant {
        Variant::Pfs => c.gamma * (c.gamma - 2.0 * c.beta) / 2.0,
        _ => crate::scalar::kappa(c.beta, c.gamma) * c.gamma,
    };
    let gap = report.f0() - f_star;
    let m2 = report.m_f * report.m_f;
    let mut out = BoundCheck::new();
    for rec in report.trace.records.iter().take(report.outside_region()) {
        let n = rec.iter as f64;
        let bound = (-rate * n * n / (m2 * gap)).exp();
        out.record(rec.t.unwrap_or(0.0), bound);
    }
    out
}

/// `t_{N+1} <= (1 - tau (N+1) / (f(x_0) - f*))^{N+1}` with
/// `tau = gamma(gamma - 2 beta) / (2 M_f^2)`, for `N + 1 < (f(x_0) - f*) / tau`
/// and `x_0..x_N` outside the quadratic region.
pub fn pfs_superlinear_check(report: &PathReport, f0_minus_fstar: f64) -> BoundCheck {
    let c = &report.constants;
    let tau = c.gamma * (c.gamma - 2.0 * c.beta) / (2.0 * report.m_f * report.m_f);
    let recs = &report.trace.records;
    let mut out = BoundCheck::new();
    for n in 0..report.outside_region() {
        let k = (n + 1) as f64;
        if k >= f0_minus_fstar / tau || n + 1 >= recs.len() {
            break;
        }
        let bound = (1.0 - tau * k / f0_minus_fstar).powf(k);
        out.record(recs[n + 1].t.unwrap_or(0.0), bound);
    }
    out
}

/// Per-iteration decrease `f(x_k) - f(x_{k+1}) >= factor t_k ||c||*_{x_k}` on
/// unclamped path steps from iterates outside the quadratic region, where
/// `factor` is `(gamma - 2 beta)/(2 M_f)` or `kappa / M_f`.
pub fn decrease_check(report: &PathReport) -> BoundCheck {
    let c = &report.constants;
    let factor = match c.variant {
        Variant::Pfs => (c.gamma - 2.0 * c.beta) / (2.0 * report.m_f),
        _ => crate::scalar::kappa(c.beta, c.gamma) / report.m_f,
    };
    let recs = &report.trace.records;
    let mut out = BoundCheck::new();
    for k in 0..report.outside_region() {
        let (Some(a), Some(b)) = (recs.get(k), recs.get(k + 1)) else { break };
        if b.t.unwrap_or(0.0) <= 0.0 {
            continue;
        }
        let required = factor * a.t.unwrap_or(0.0) * a.c_norm.unwrap_or(0.0);
        let tol = 1e-12 * (a.value.abs() + 1.0);
        // observed decrease must exceed the requirement; record the shortfall
        out.record(required - tol, a.value - b.value);
    }
    out
}

/// Smallest `N` satisfying the iteration bound of the plain or
/// predictor-corrector scheme:
/// `N >= [Delta / rate * ln(M_f D omega^{-1}(Delta) / omega((1-beta)(1-2beta)/2))]^{1/2}`,
/// with `rate = gamma(gamma-2beta)/2` or `gamma kappa`, `Delta = M_f^2 (f(x_0) - f*)`
/// and `D` the diameter of the initial level set in the norm at `x_0`.
pub fn iteration_bound(consts: &PathConstants, m_f: f64, delta: f64, diameter: f64) -> Result<f64> {
    let rate = match consts.variant {
        Variant::Pfs => consts.gamma * (consts.gamma - 2.0 * consts.beta) / 2.0,
        _ => crate::scalar::kappa(consts.beta, consts.gamma) * consts.gamma,
    };
    let inner = omega((1.0 - consts.beta) * (1.0 - 2.0 * consts.beta) / 2.0)?;
    let arg = m_f * diameter * omega_inverse(delta)? / inner;
    if arg <= 1.0 {
        return Ok(0.0);
    }
    Ok((delta / rate * arg.ln()).sqrt())
}

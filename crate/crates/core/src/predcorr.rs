//! Predictor-corrector path-following.
//!
//! The predictor moves along the tangent of the central path,
//! `y = x - tau f''(x)^{-1} f'(x_0)` with `tau = gamma / (M_f ||c||*_x)`, and
//! the corrector is one full Newton step on `f_{t - tau}` from `y`.

use crate::error::{Error, Result};
use crate::oracle::{LocalModel, ScOracle, Vector};
use crate::pathfollow::{
    adaptive_search, centering_bound, check_output, drive_path, next_t, residual_at, validate_for,
    AdaptiveOutcome, CenteredPair, PathConfig, PathReport, PathStep, StepChoice,
};
use crate::scalar::{PathConstants, Variant};
use crate::trace::Stage;

/// Smallest step tried by the adaptive predictor-corrector scheme.
pub const PCPFS_GAMMA_FLOOR: f64 = 0.158;

/// Upper bound on `lambda_{f_{t - tau}}(x + tau h)` with `h = f''(x)^{-1} c`,
/// given `lambda = lambda_{f_t}(x)` and `r = ||c||*_x`:
/// `lambda (1 + q/(1-q)) + (q/(1-q))^2 / M_f` with `q = tau M_f r`.
///
/// The bound is established for `tau >= 0`; it requires `|q| < 1`.
pub fn predictor_bound(lambda: f64, tau: f64, r: f64, m_f: f64) -> Result<f64> {
    let q = tau * m_f * r;
    if !(q.abs() < 1.0) {
        return Err(Error::ScalarDomain { function: "predictor_bound", value: q });
    }
    let ratio = q / (1.0 - q);
    let tail = if m_f > 0.0 { ratio * ratio / m_f } else { 0.0 };
    Ok(lambda * (1.0 + ratio) + tail)
}

/// Predictor and corrector from a known local model. The predictor never
/// overshoots `t = 0`.
pub(crate) fn pc_step(oracle: &dyn ScOracle, model: &LocalModel, pair: &CenteredPair, gamma: f64) -> Result<PathStep> {
    let m_f = oracle.sc_constant();
    let c_norm = model.geometry.dual_norm(&pair.c)?;
    let t = next_t(pair.t, gamma, m_f, c_norm);
    let tau = pair.t - t;
    let tangent = model.geometry.solve(&pair.c)?;
    let y = &model.x + tangent * tau;
    if !oracle.in_domain(&y) {
        return Err(Error::OutsideDomain);
    }
    let at_y = LocalModel::at(oracle, &y)?;
    let g = &at_y.gradient + &pair.c * t;
    let d = at_y.geometry.solve(&g)?;
    let x = &y - d;
    if !oracle.in_domain(&x) {
        return Err(Error::OutsideDomain);
    }
    let next = LocalModel::at(oracle, &x)?;
    let residual = residual_at(&next, &pair.c, t)?;
    let step_norm = model.geometry.primal_norm(&(&x - &model.x))?;
    Ok(PathStep { pair: CenteredPair { t, x, residual, c: pair.c.clone() }, model: next, step_norm })
}

/// Intermediate quantities of one predictor-corrector iteration.
#[derive(Debug, Clone)]
pub struct PredictorInfo {
    pub y: Vector,
    pub t_next: f64,
    /// `lambda_{f_{t_+}}(y)`.
    pub lambda_at_predictor: f64,
    pub bound: f64,
}

/// Evaluates the predictor only, for checking the tangent estimate.
pub fn predictor(oracle: &dyn ScOracle, pair: &CenteredPair, gamma: f64) -> Result<PredictorInfo> {
    let m_f = oracle.sc_constant();
    let model = LocalModel::at(oracle, &pair.x)?;
    let c_norm = model.geometry.dual_norm(&pair.c)?;
    let t_next = next_t(pair.t, gamma, m_f, c_norm);
    let tau = pair.t - t_next;
    let y = &model.x + model.geometry.solve(&pair.c)? * tau;
    let at_y = LocalModel::at(oracle, &y)?;
    let lambda_at_predictor = residual_at(&at_y, &pair.c, t_next)?;
    let lambda = residual_at(&model, &pair.c, pair.t)?;
    let bound = predictor_bound(lambda, tau, c_norm, m_f)?;
    Ok(PredictorInfo { y, t_next, lambda_at_predictor, bound })
}

/// One predictor-corrector iteration.
pub fn pcpfs_iterate(oracle: &dyn ScOracle, pair: &CenteredPair, consts: &PathConstants) -> Result<CenteredPair> {
    let consts = validate_for(consts, Variant::Pcpfs)?;
    let bound = centering_bound(consts.beta, oracle.sc_constant());
    let model = LocalModel::at(oracle, &pair.x)?;
    let residual = residual_at(&model, &pair.c, pair.t)?;
    if !crate::pathfollow::is_centered(residual, bound) {
        return Err(Error::NotCentered { residual, bound });
    }
    let step = pc_step(oracle, &model, pair, consts.gamma)?;
    check_output(&step.pair, bound)?;
    Ok(step.pair)
}

pub fn adaptive_pcpfs_iterate(oracle: &dyn ScOracle, pair: &CenteredPair, gamma_prev: f64) -> Result<AdaptiveOutcome> {
    let bound = centering_bound(PathConstants::PCPFS.beta, oracle.sc_constant());
    let model = LocalModel::at(oracle, &pair.x)?;
    let residual = residual_at(&model, &pair.c, pair.t)?;
    if !crate::pathfollow::is_centered(residual, bound) {
        return Err(Error::NotCentered { residual, bound });
    }
    let (step, gamma, index) =
        adaptive_search(gamma_prev, PCPFS_GAMMA_FLOOR, bound, |g| pc_step(oracle, &model, pair, g))?;
    Ok(AdaptiveOutcome { pair: step.pair, gamma, index })
}

/// Predictor-corrector path-following from `(1, x_0)` followed by quadratic finishing.
pub fn pcpfs_solve(
    oracle: &dyn ScOracle,
    x0: &Vector,
    consts: &PathConstants,
    config: &PathConfig,
) -> Result<(Vector, PathReport)> {
    let consts = validate_for(consts, Variant::Pcpfs)?;
    drive_path(oracle, x0, consts, config, Stage::PredictorCorrector, false, |model, pair| {
        let step = pc_step(oracle, model, pair, consts.gamma)?;
        Ok(StepChoice { step, gamma: consts.gamma, tries: 1 })
    })
}

pub fn adaptive_pcpfs_solve(oracle: &dyn ScOracle, x0: &Vector, config: &PathConfig) -> Result<(Vector, PathReport)> {
    let consts = PathConstants::PCPFS;
    let bound = centering_bound(consts.beta, oracle.sc_constant());
    let mut gamma_prev = config.initial_gamma.unwrap_or(2.0 * PCPFS_GAMMA_FLOOR);
    drive_path(oracle, x0, consts, config, Stage::PredictorCorrector, true, |model, pair| {
        let (step, gamma, index) =
            adaptive_search(gamma_prev, PCPFS_GAMMA_FLOOR, bound, |g| pc_step(oracle, model, pair, g))?;
        gamma_prev = gamma;
        Ok(StepChoice { step, gamma, tries: index + 1 })
    })
}

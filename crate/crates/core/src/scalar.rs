//! Scalar functions that appear in every self-concordant complexity bound,
//! and the admissibility checks for the path-following constants.
//!
//! `omega(t) = t - ln(1 + t)` and its conjugate `omega_star(t) = -t - ln(1 - t)`
//! are evaluated through `ln_1p` and switch to their Taylor series near zero,
//! where the direct formulas lose every significant digit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SERIES_CUTOFF: f64 = 0.1;
const SERIES_TERMS: usize = 40;
/// Upper end of the interval on which `omega_star` is inverted.
pub const OMEGA_STAR_CAP: f64 = 1.0 - 1e-15;

/// A scalar that has already been multiplied by the self-concordance constant.
///
/// The omega functions are only meaningful on dimensionless arguments such as
/// `M_f * lambda`. Solver code builds its arguments through this type.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Dimensionless(f64);

impl Dimensionless {
    pub fn scaled(m_f: f64, quantity: f64) -> Self {
        debug_assert!(m_f >= 0.0 && m_f.is_finite(), "bad constant {m_f}");
        debug_assert!(quantity >= 0.0, "negative local quantity {quantity}");
        Dimensionless(m_f * quantity)
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

fn series(tau: f64, alternating: bool) -> f64 {
    // sum_{k>=2} s_k tau^k / k
    let mut pow = tau * tau;
    let mut sum = 0.0;
    for k in 2..SERIES_TERMS {
        let term = pow / k as f64;
        sum += if alternating && k % 2 == 1 { -term } else { term };
        pow *= tau;
    }
    sum
}

/// `omega(t) = t - ln(1 + t)` for `t >= 0`.
pub fn omega(tau: f64) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::ScalarDomain { function: "omega", value: tau });
    }
    if tau.is_infinite() {
        return Ok(f64::INFINITY);
    }
    Ok(if tau < SERIES_CUTOFF { series(tau, true) } else { tau - tau.ln_1p() })
}

/// `omega_star(t) = -t - ln(1 - t)` for `0 <= t < 1`.
pub fn omega_star(tau: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::ScalarDomain { function: "omega_star", value: tau });
    }
    Ok(if tau < SERIES_CUTOFF { series(tau, false) } else { -tau - (-tau).ln_1p() })
}

pub fn omega_prime(tau: f64) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::ScalarDomain { function: "omega_prime", value: tau });
    }
    Ok(tau / (1.0 + tau))
}

pub fn omega_star_prime(tau: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::ScalarDomain { function: "omega_star_prime", value: tau });
    }
    Ok(tau / (1.0 - tau))
}

pub fn omega_of(arg: Dimensionless) -> Result<f64> {
    omega(arg.get())
}

pub fn omega_star_of(arg: Dimensionless) -> Result<f64> {
    omega_star(arg.get())
}

/// Safeguarded Newton for an increasing function on `[lo, hi]`.
pub(crate) fn monotone_root(
    name: &'static str,
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    seed: f64,
) -> Result<f64> {
    let mut x = seed.clamp(lo, hi);
    for _ in 0..400 {
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = df(x);
        let mut next = if d > 0.0 { x - fx / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-17 * next.abs().max(1e-300) || hi - lo <= f64::EPSILON * hi.abs() {
            return Ok(next);
        }
        x = next;
    }
    if hi - lo <= 1e-12 * hi.abs().max(1e-300) {
        Ok(0.5 * (lo + hi))
    } else {
        Err(Error::RootFinding(format!("{name} did not converge")))
    }
}

/// Inverse of `omega_star` on `[0, 1 - 1e-15)`.
pub fn omega_star_inverse(v: f64) -> Result<f64> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::ScalarDomain { function: "omega_star_inverse", value: v });
    }
    if v == 0.0 {
        return Ok(0.0);
    }
    let cap_value = omega_star(OMEGA_STAR_CAP)?;
    if v >= cap_value {
        return Err(Error::RootFinding(format!(
            "omega_star_inverse: {v} exceeds the representable range ({cap_value})"
        )));
    }
    let f = |t: f64| omega_star(t).unwrap_or(f64::INFINITY) - v;
    let df = |t: f64| t / (1.0 - t);
    monotone_root("omega_star_inverse", f, df, 0.0, OMEGA_STAR_CAP, (2.0 * v).sqrt().min(0.5))
}

/// Inverse of `omega` on `[0, inf)`.
pub fn omega_inverse(v: f64) -> Result<f64> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::ScalarDomain { function: "omega_inverse", value: v });
    }
    if v == 0.0 {
        return Ok(0.0);
    }
    let f = |t: f64| omega(t).unwrap_or(f64::NAN) - v;
    let df = |t: f64| t / (1.0 + t);
    let seed = if v < 1.0 { (2.0 * v).sqrt() } else { v + (1.0 + v).ln() };
    monotone_root("omega_inverse", f, df, 0.0, 2.0 * v + 2.0, seed)
}

/// Which scheme a pair of constants is meant for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Plain path-following: one Newton step per path update.
    Pfs,
    /// Predictor-corrector path-following for unconstrained minimization.
    Pcpfs,
    /// Predictor-corrector schemes on self-concordant barriers.
    BarrierPc,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pfs" => Ok(Variant::Pfs),
            "pcpfs" => Ok(Variant::Pcpfs),
            "barrier-pc" | "barrier" => Ok(Variant::BarrierPc),
            _ => Err(Error::InvalidArgument(format!("unknown variant `{s}`"))),
        }
    }
}

/// Centering radius `beta` and path step `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathConstants {
    pub beta: f64,
    pub gamma: f64,
    pub variant: Variant,
}

/// One inequality of an admissibility check. The check holds when `slack >= 0`
/// (or `> 0` for strict conditions).
#[derive(Debug, Clone, Serialize)]
pub struct Condition {
    pub name: &'static str,
    pub slack: f64,
    pub strict: bool,
}

impl Condition {
    pub fn holds(&self) -> bool {
        if self.strict {
            self.slack > 0.0
        } else {
            self.slack >= 0.0
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub constants: PathConstants,
    pub conditions: Vec<Condition>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.conditions.iter().all(Condition::holds)
    }

    pub fn into_result(self) -> Result<PathConstants> {
        if self.ok() {
            return Ok(self.constants);
        }
        let failed: Vec<String> = self
            .conditions
            .iter()
            .filter(|c| !c.holds())
            .map(|c| format!("{} (slack {:e})", c.name, c.slack))
            .collect();
        Err(Error::InvalidConstants(format!(
            "beta={}, gamma={}: {}",
            self.constants.beta,
            self.constants.gamma,
            failed.join(", ")
        )))
    }
}

/// `kappa = gamma/2 - beta/(1-gamma)^2 - gamma^2/(1-gamma)^3`, the per-step
/// decrease factor of the predictor-corrector scheme.
pub fn kappa(beta: f64, gamma: f64) -> f64 {
    let q = 1.0 - gamma;
    gamma / 2.0 - beta / (q * q) - gamma * gamma / (q * q * q)
}

/// Leading constant `sqrt(2 / (gamma (gamma - 2 beta)))` of the plain scheme.
pub fn pfs_rate_constant(beta: f64, gamma: f64) -> f64 {
    (2.0 / (gamma * (gamma - 2.0 * beta))).sqrt()
}

/// Leading constant `1 / sqrt(gamma kappa)` of the predictor-corrector scheme.
pub fn pcpfs_rate_constant(beta: f64, gamma: f64) -> f64 {
    1.0 / (gamma * kappa(beta, gamma)).sqrt()
}

/// Leading constant `1 / gamma` of the barrier predictor-corrector schemes.
pub fn barrier_rate_constant(gamma: f64) -> f64 {
    1.0 / gamma
}

impl PathConstants {
    pub const PFS: PathConstants = PathConstants { beta: 0.026, gamma: 0.1125, variant: Variant::Pfs };
    pub const PCPFS: PathConstants = PathConstants { beta: 0.0015, gamma: 0.158, variant: Variant::Pcpfs };
    pub const BARRIER_PC: PathConstants =
        PathConstants { beta: 0.06, gamma: 0.254, variant: Variant::BarrierPc };

    pub fn new(beta: f64, gamma: f64, variant: Variant) -> Self {
        PathConstants { beta, gamma, variant }
    }

    pub fn default_for(variant: Variant) -> Self {
        match variant {
            Variant::Pfs => Self::PFS,
            Variant::Pcpfs => Self::PCPFS,
            Variant::BarrierPc => Self::BARRIER_PC,
        }
    }

    pub fn validate(&self) -> ValidationReport {
        validate_constants(self.beta, self.gamma, self.variant)
    }

    /// Complexity constant in front of the leading term of the iteration bound.
    pub fn rate_constant(&self) -> f64 {
        match self.variant {
            Variant::Pfs => pfs_rate_constant(self.beta, self.gamma),
            Variant::Pcpfs => pcpfs_rate_constant(self.beta, self.gamma),
            Variant::BarrierPc => barrier_rate_constant(self.gamma),
        }
    }
}

fn omega_star_or_inf(tau: f64) -> f64 {
    omega_star(tau).unwrap_or(f64::INFINITY)
}

/// Checks the inequalities a `(beta, gamma)` pair must satisfy for `variant`.
pub fn validate_constants(beta: f64, gamma: f64, variant: Variant) -> ValidationReport {
    let constants = PathConstants { beta, gamma, variant };
    let mut conditions = vec![
        Condition { name: "beta > 0", slack: beta, strict: true },
        Condition { name: "0 < gamma < 1", slack: gamma.min(1.0 - gamma), strict: true },
    ];
    if !(beta > 0.0 && gamma > 0.0 && gamma < 1.0) {
        return ValidationReport { constants, conditions };
    }
    match variant {
        Variant::Pfs => {
            let root = beta.sqrt();
            conditions.push(Condition {
                name: "gamma <= sqrt(beta)/(1+sqrt(beta)) - beta",
                slack: root / (1.0 + root) - beta - gamma,
                strict: false,
            });
            conditions.push(Condition { name: "gamma > 2 beta", slack: gamma - 2.0 * beta, strict: true });
            conditions.push(Condition {
                name: "gamma(1-2beta)/4 >= omega_star(beta+gamma)",
                slack: gamma * (1.0 - 2.0 * beta) / 4.0 - omega_star_or_inf(beta + gamma),
                strict: false,
            });
        }
        Variant::Pcpfs | Variant::BarrierPc => {
            let q = 1.0 - gamma;
            let shift = beta / q + (gamma / q).powi(2);
            let recenter = if shift < 1.0 { shift / (1.0 - shift) } else { f64::INFINITY };
            conditions.push(Condition {
                name: "omega_star'(beta/(1-gamma) + (gamma/(1-gamma))^2) <= sqrt(beta)",
                slack: beta.sqrt() - recenter,
                strict: false,
            });
            if variant == Variant::Pcpfs {
                conditions.push(Condition { name: "kappa > 0", slack: kappa(beta, gamma), strict: true });
                conditions.push(Condition {
                    name: "gamma(1-2beta)/4 >= omega_star(gamma) + omega_star(shift)",
                    slack: gamma * (1.0 - 2.0 * beta) / 4.0
                        - omega_star_or_inf(gamma)
                        - omega_star_or_inf(shift),
                    strict: false,
                });
            }
        }
    }
    ValidationReport { constants, conditions }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_branch_matches_direct_formula_at_cutoff() {
        let t = SERIES_CUTOFF * 0.999;
        let direct = t - t.ln_1p();
        assert!((omega(t).unwrap() - direct).abs() < 1e-15);
        let direct = -t - (-t).ln_1p();
        assert!((omega_star(t).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn domains_are_enforced() {
        assert!(omega(-1e-3).is_err());
        assert!(omega_star(1.0).is_err());
        assert!(omega_star(-0.1).is_err());
        assert!(omega_star_inverse(-1.0).is_err());
        assert!(omega_star_inverse(40.0).is_err());
    }

    #[test]
    fn inverse_of_zero_is_zero() {
        assert_eq!(omega_star_inverse(0.0).unwrap(), 0.0);
        assert_eq!(omega_inverse(0.0).unwrap(), 0.0);
    }

    #[test]
    fn barrier_constants_are_not_held_to_kappa() {
        assert!(kappa(0.06, 0.254) < 0.0);
        assert!(PathConstants::BARRIER_PC.validate().ok());
    }

    #[test]
    fn out_of_range_pairs_are_rejected() {
        assert!(!validate_constants(0.026, 0.2, Variant::Pfs).ok());
        assert!(!validate_constants(0.0015, 0.4, Variant::Pcpfs).ok());
        assert!(!validate_constants(0.1, 0.35, Variant::BarrierPc).ok());
        assert!(!validate_constants(0.0, 0.1, Variant::Pfs).ok());
    }
}

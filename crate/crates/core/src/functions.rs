//! Concrete self-concordant functions and barriers.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::oracle::{Barrier, Evaluation, Matrix, ScOracle, Vector};
use crate::scalar::monotone_root;

/// Bound on `|phi'''|` for the logistic loss `phi(s) = ln(1 + e^{-s})`.
pub const LOGISTIC_THIRD_DERIVATIVE: f64 = 0.096_225_044_864_937_63;
/// Bound on the third derivative of log-sum-exp in the Euclidean norm.
pub const LSE_THIRD_DERIVATIVE: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// `M_f = H_f / (2 sigma_f^{3/2})` for a `sigma_f`-strongly convex function
/// with `H_f`-Lipschitz Hessian.
pub fn sc_constant_from_lipschitz(sigma_f: f64, h_f: f64) -> Result<f64> {
    if !(sigma_f > 0.0) || !(h_f >= 0.0) || !sigma_f.is_finite() || !h_f.is_finite() {
        return Err(Error::InvalidArgument(format!("need sigma > 0 and H >= 0, got ({sigma_f}, {h_f})")));
    }
    Ok(h_f / (2.0 * sigma_f.powf(1.5)))
}

pub fn spectral_norm(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().max()
}

/// `sum_i (x_i - ln x_i)`; minimizer `x = 1`, minimum `n`.
#[derive(Debug, Clone)]
pub struct XMinusLog {
    pub n: usize,
}

impl ScOracle for XMinusLog {
    fn dim(&self) -> usize {
        self.n
    }
    fn sc_constant(&self) -> f64 {
        1.0
    }
    fn in_domain(&self, x: &Vector) -> bool {
        x.len() == self.n && x.iter().all(|&v| v > 0.0 && v.is_finite())
    }
    fn evaluate(&self, x: &Vector) -> Result<Evaluation> {
        check_dim(self.n, x.len())?;
        if !self.in_domain(x) {
            return Err(Error::OutsideDomain);
        }
        Ok(Evaluation {
            value: x.iter().map(|&v| v - v.ln()).sum(),
            gradient: x.map(|v| 1.0 - 1.0 / v),
            hessian: DMatrix::from_diagonal(&x.map(|v| 1.0 / (v * v))),
        })
    }
}

/// `-sum_i ln x_i` on the positive orthant.
#[derive(Debug, Clone)]
pub struct NegLog {
    pub n: usize,
}

impl ScOracle for NegLog {
    fn dim(&self) -> usize {
        self.n
    }
    fn sc_constant(&self) -> f64 {
        1.0
    }
    fn in_domain(&self, x: &Vector) -> bool {
        x.len() == self.n && x.iter().all(|&v| v > 0.0 && v.is_finite())
    }
    fn evaluate(&self, x: &Vector) -> Result<Evaluation> {
        check_dim(self.n, x.len())?;
        if !self.in_domain(x) {
            return Err(Error::OutsideDomain);
        }
        Ok(Evaluation {
            value: -x.iter().map(|v| v.ln()).sum::<f64>(),
            gradient: x.map(|v| -1.0 / v),
            hessian: DMatrix::from_diagonal(&x.map(|v| 1.0 / (v * v))),
        })
    }
}

impl Barrier for NegLog {
    fn nu(&self) -> f64 {
        self.n as f64
    }
    fn conjugate_point(&self, s: &Vector) -> Option<Result<Vector>> {
        if s.iter().all(|&v| v < 0.0) {
            Some(Ok(s.map(|v| -1.0 / v)))
        } else {
            Some(Err(Error::OutsideDomain))
        }
    }
}

/// `1/2 <Q x, x> + <q, x>` with a declared constant (zero by default).
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub q: Matrix,
    pub linear: Vector,
    pub m_f: f64,
}

impl Quadratic {
    pub fn new(q: Matrix, linear: Vector) -> Result<Self> {
        check_dim(q.nrows(), linear.len())?;
        check_dim(q.nrows(), q.ncols())?;
        Ok(Quadratic { q, linear, m_f: 0.0 })
    }
}

impl ScOracle for Quadratic {
    fn dim(&self) -> usize {
        self.linear.len()
    }
    fn sc_constant(&self) -> f64 {
        self.m_f
    }
    fn in_domain(&self, x: &Vector) -> bool {
        x.len() == self.dim() && x.iter().all(|v| v.is_finite())
    }
    fn evaluate(&self, x: &Vector) -> Result<Evaluation> {
        check_dim(self.dim(), x.len())?;
        let qx = &self.q * x;
        Ok(Evaluation { value: 0.5 * qx.dot(x) + self.linear.dot(x), gradient: qx + &self.linear, hessian: self.q.clone() })
    }
}

/// `-sum_i ln(1 - x_i^2)`, the barrier of the box `[-1, 1]^n` (`nu = 2n`).
#[derive(Debug, Clone)]
pub struct BoxBarrier {
    pub n: usize,
}

impl ScOracle for BoxBarrier {
    fn dim(&self) -> usize {
        self.n
    }
    fn sc_constant(&self) -> f64 {
        1.0
    }
    fn in_domain(&self, x: &Vector) -> bool {
        x.len() == self.n && x.iter().all(|v| v.abs() < 1.0)
    }
    fn evaluate(&self, x: &Vector) -> Result<Evaluation> {
        check_dim(self.n, x.len())?;
        if !self.in_domain(x) {
            return Err(Error::OutsideDomain);
        }
        let value = x.iter().map(|&v| -(-v).ln_1p() - v.ln_1p()).sum();
        let gradient = x.map(|v| 2.0 * v / ((1.0 - v) * (1.0 + v)));
        let hessian = DMatrix::from_diagonal(&x.map(|v| {
            let q = (1.0 - v) * (1.0 + v);
            2.0 * (1.0 + v * v) / (q * q)
        }));
        Ok(Evaluation { value, gradient, hessian })
    }
}

impl Barrier for BoxBarrier {
    fn nu(&self) -> f64 {
        2.0 * self.n as f64
    }
    fn analytic_center(&self) -> Option<Vector> {
        Some(DVector::zeros(self.n))
    }
    fn conjugate_point(&self, s: &Vector) -> Option<Result<Vector>> {
        // s x^2 + 2 x - s = 0, root in (-1, 1)
        Some(Ok(s.map(|v| v / (1.0 + (1.0 + v * v).sqrt()))))
    }
}

/// `-sum_i ln x_i - ln(1 - sum_i x_i)`, the barrier of the full-dimensional
/// simplex `{x >= 0, sum x <= 1}` (`nu = n + 1`).
#[derive(Debug, Clone)]
pub struct SimplexBarrier {
    pub n: usize,
}

impl SimplexBarrier {
    fn slack(x: &Vector) -> f64 {
        1.0 - x.sum()
    }
}

impl ScOracle for SimplexBarrier {
    fn dim(&self) -> usize {
        self.n
    }
    fn sc_constant(&self) -> f64 {
        1.0
    }
    fn in_domain(&self, x: &Vector) -> bool {
        x.len() == self.n && x.iter().all(|&v| v > 0.0) && Self::slack(x) > 0.0
    }
    fn evaluate(&self, x: &Vector) -> Result<Evaluation> {
        check_dim(self.n, x.len())?;
        if !self.in_domain(x) {
            return Err(Error::OutsideDomain);
        }
        let s0 = Self::slack(x);
        let value = -x.iter().map(|v| v.ln()).sum::<f64>() - s0.ln();
        let gradient = x.map(|v| -1.0 / v + 1.0 / s0);
        let mut hessian = DMatrix::from_element(self.n, self.n, 1.0 / (s0 * s0));
        for i in 0..self.n {
            hessian[(i, i)] += 1.0 / (x[i] * x[i]);
        }
        Ok(Evaluation { value, gradient, hessian })
    }
}

impl Barrier for SimplexBarrier {
    fn nu(&self) -> f64 {
        self.n as f64 + 1.0
    }
    fn analytic_center(&self) -> Option<Vector> {
        Some(DVector::from_element(self.n, 1.0 / (self.n as f64 + 1.0)))
    }
    fn conjugate_point(&self, s: &Vector) -> Option<Result<Vector>> {
        // x_i = 1/(w - s_i) with w = 1/(1 - sum x) the root of
        // 1 - 1/w - sum_i 1/(w - s_i) = 0 on w > max(0, max s).
        let floor = s.iter().fold(0.0f64, |a, &b| a.max(b));
        let gaps: Vec<f64> = s.iter().map(|&v| floor - v).collect();
        let g = |v: f64| 1.0 - 1.0 / (v + floor) - gaps.iter().map(|&d| 1.0 / (v + d)).sum::<f64>();
        let dg = |v: f64| 1.0 / (v + floor).powi(2) + gaps.iter().map(|&d| 1.0 / (v + d).powi(2)).sum::<f64>();
        let hi = self.n as f64 + 1.0;
        let root = monotone_root("simplex conjugate", g, dg, 0.0, hi, hi * 1e-3);
        Some(root.map(|v| DVector::from_iterator(self.n, gaps.iter().map(|&d| 1.0 / (v + d)))))
    }
}

/// `mu lse((A x + b) / mu) + sigma/2 ||x||^2`.
///
/// The declared constants are `sigma_f = sigma` and
/// `H_f = ||A||^3 / (sqrt(2) mu^2)`.
#[derive(Debug, Clone)]
pub struct RegularizedLse {
    pub a: Matrix,
    pub b: Vector,
    pub mu: f64,
    pub sigma: f64,
    h_f: f64,
}

impl RegularizedLse {
    pub fn new(a: Matrix, b: Vector, mu: f64, sigma: f64) -> Result<Self> {
        check_dim(a.nrows(), b.len())?;
        if !(mu > 0.0 && sigma > 0.0) {
            return Err(Error::InvalidArgument("mu and sigma must be positive".into()));
        }
        let h_f = LSE_THIRD_DERIVATIVE * spectral_norm(&a).powi(3) / (mu * mu);
        Ok(RegularizedLse { a, b, mu, sigma, h_f })
    }

    pub fn lipschitz_hessian(&self) -> f64 {
        self.h_f
    }

    fn softmax(&self, x: &Vector) -> (f64, Vector) {
        let z = (&self.a * x + &self.b) / self.mu;
        let top = z.max();
        let e = z.map(|v| (v - top).exp());
        let total = e.sum();
        (self.mu * (top + total.ln()), e / total)
    }
}

impl ScOracle for RegularizedLse {
    fn dim(&self) -> usize {
        self.a.ncols()
    }
    fn sc_constant(&self) -> f64 {
        self.h_f / (2.0 * self.sigma.powf(1.5))
    }
    fn in_domain(&self, x: &Vector) -> bool {
        x.len() == self.dim() && x.iter().all(|v| v.is_finite())
    }
    fn evaluate(&self, x: &Vector) -> Result<Evaluation> {
        check_dim(self.dim(), x.len())?;
        let (lse, p) = self.softmax(x);
        let value = lse + 0.5 * self.sigma * x.norm_squared();
        let gradient = self.a.tr_mul(&p) + x * self.sigma;
        let ap = self.a.tr_mul(&p);
        let weighted = DMatrix::from_fn(self.a.nrows(), self.a.ncols(), |i, j| p[i] * self.a[(i, j)]);
        let mut hessian = (self.a.tr_mul(&weighted) - &ap * ap.transpose()) / self.mu;
        for i in 0..self.dim() {
            hessian[(i, i)] += self.sigma;
        }
        Ok(Evaluation { value, gradient, hessian: (&hessian + hessian.transpose()) * 0.5 })
    }
    fn value(&self, x: &Vector) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.softmax(x).0 + 0.5 * self.sigma * x.norm_squared())
    }
}

/// `sum_i ln(1 + exp(-y_i <a_i, x>)) + sigma/2 ||x||^2` with rows `a_i` of `A`.
///
/// Declared constants: `sigma_f = sigma`,
/// `H_f = max|phi'''| max_i ||a_i|| ||A||^2`.
#[derive(Debug, Clone)]
pub struct Logistic {
    pub a: Matrix,
    pub labels: Vector,
    pub sigma: f64,
    h_f: f64,
}

impl Logistic {
    pub fn new(a: Matrix, labels: Vector, sigma: f64) -> Result<Self> {
        check_dim(a.nrows(), labels.len())?;
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument("sigma must be positive".into()));
        }
        let row_max = a.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
        let h_f = LOGISTIC_THIRD_DERIVATIVE * row_max * spectral_norm(&a).powi(2);
        Ok(Logistic { a, labels, sigma, h_f })
    }

    pub fn lipschitz_hessian(&self) -> f64 {
        self.h_f
    }
}

fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl ScOracle for Logistic {
    fn dim(&self) -> usize {
        self.a.ncols()
    }
    fn sc_constant(&self) -> f64 {
        self.h_f / (2.0 * self.sigma.powf(1.5))
    }
    fn in_domain(&self, x: &Vector) -> bool {
        x.len() == self.dim() && x.iter().all(|v| v.is_finite())
    }
    fn evaluate(&self, x: &Vector) -> Result<Evaluation> {
        check_dim(self.dim(), x.len())?;
        let margins = (&self.a * x).component_mul(&self.labels);
        let value = margins.iter().map(|&s| softplus(-s)).sum::<f64>() + 0.5 * self.sigma * x.norm_squared();
        let slope = DVector::from_iterator(margins.len(), margins.iter().zip(self.labels.iter()).map(|(&s, &y)| -sigmoid(-s) * y));
        let curv = margins.map(|s| sigmoid(s) * sigmoid(-s));
        let gradient = self.a.tr_mul(&slope) + x * self.sigma;
        let weighted = DMatrix::from_fn(self.a.nrows(), self.a.ncols(), |i, j| curv[i] * self.a[(i, j)]);
        let mut hessian = self.a.tr_mul(&weighted);
        for i in 0..self.dim() {
            hessian[(i, i)] += self.sigma;
        }
        Ok(Evaluation { value, gradient, hessian: (&hessian + hessian.transpose()) * 0.5 })
    }
}

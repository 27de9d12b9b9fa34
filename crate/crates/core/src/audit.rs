//! Sampled checks of oracle derivatives and of the self-concordance
//! inequalities. Declared constants are trusted by the solvers; this module
//! is where violations show up.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::Result;
use crate::linops::LocalGeometry;
use crate::oracle::{Barrier, Conjugate, LocalModel, ScOracle, Vector};
use crate::scalar::{omega, omega_star};
use crate::zoo::ProblemInstance;

/// `lhs <= rhs`, up to rounding.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Inequality {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
}

impl Inequality {
    pub fn new(name: &'static str, lhs: f64, rhs: f64) -> Self {
        Inequality { name, lhs, rhs }
    }

    /// `lhs - rhs <= rel * max(|lhs|, |rhs|) + abs`.
    pub fn holds_within(&self, rel: f64, abs: f64) -> bool {
        self.lhs - self.rhs <= rel * self.lhs.abs().max(self.rhs.abs()) + abs
    }

    pub fn holds(&self) -> bool {
        self.holds_within(1e-9, 1e-12)
    }
}

/// `omega(M r) / M^2`, with the quadratic limit at `M = 0`.
fn omega_scaled(m: f64, r: f64) -> f64 {
    if m == 0.0 {
        0.5 * r * r
    } else {
        omega(m * r).expect("nonnegative") / (m * m)
    }
}

fn omega_star_scaled(m: f64, r: f64) -> f64 {
    if m == 0.0 {
        0.5 * r * r
    } else {
        omega_star(m * r).unwrap_or(f64::INFINITY) / (m * m)
    }
}

/// Directions `L^{-T} e_j`, unit in the local norm at `x`.
fn local_basis(geometry: &LocalGeometry) -> Option<DMatrix<f64>> {
    geometry.factor().transpose().try_inverse()
}

/// Relative error of the gradient against central differences of the value,
/// measured in the local dual norm and scaled by `max(lambda, 1)`.
pub fn gradient_fd_error(oracle: &dyn ScOracle, x: &Vector) -> Result<f64> {
    let model = LocalModel::at(oracle, x)?;
    let basis = local_basis(&model.geometry).ok_or(crate::Error::NotPositiveDefinite)?;
    let t = 1e-4 / oracle.sc_constant().max(1.0);
    let mut err = 0.0;
    for j in 0..x.len() {
        let v = basis.column(j).into_owned();
        let fd = (oracle.value(&(x + &v * t))? - oracle.value(&(x - &v * t))?) / (2.0 * t);
        err += (fd - model.gradient.dot(&v)).powi(2);
    }
    Ok(err.sqrt() / model.lambda()?.max(1.0))
}

/// Largest entry of `L^{-1} (H_fd - H) L^{-T}`, with `H_fd` from central
/// differences of the gradient.
pub fn hessian_fd_error(oracle: &dyn ScOracle, x: &Vector) -> Result<f64> {
    let model = LocalModel::at(oracle, x)?;
    let basis = local_basis(&model.geometry).ok_or(crate::Error::NotPositiveDefinite)?;
    let t = 1e-5 / oracle.sc_constant().max(1.0);
    let n = x.len();
    let mut fd = DMatrix::zeros(n, n);
    for j in 0..n {
        let v = basis.column(j).into_owned();
        let diff = (oracle.gradient(&(x + &v * t))? - oracle.gradient(&(x - &v * t))?) / (2.0 * t);
        fd.set_column(j, &(basis.transpose() * diff));
    }
    let fd = (&fd + fd.transpose()) * 0.5;
    Ok((fd - DMatrix::identity(n, n)).amax())
}

fn third_derivative(oracle: &dyn ScOracle, x: &Vector, h1: &Vector, h2: &Vector, h3: &Vector) -> Result<f64> {
    let t = 1e-4 / oracle.sc_constant().max(1.0);
    let hp = oracle.evaluate(&(x + h1 * t))?.hessian;
    let hm = oracle.evaluate(&(x - h1 * t))?.hessian;
    Ok(((hp - hm) * h2).dot(h3) / (2.0 * t))
}

/// `|D^3 f(x)[h]^3| / (2 M_f ||h||_x^3)`; at most 1 for a valid `M_f`.
pub fn definition_ratio(oracle: &dyn ScOracle, x: &Vector, h: &Vector) -> Result<f64> {
    let model = LocalModel::at(oracle, x)?;
    let r = model.geometry.primal_norm(h)?;
    let u = h / r;
    let d3 = third_derivative(oracle, x, &u, &u, &u)?.abs();
    let m = oracle.sc_constant();
    Ok(if m == 0.0 { d3 } else { d3 / (2.0 * m) })
}

/// `|D^3 f(x)[h1, h2, h3]| / (2 M_f prod ||h_i||_x)`.
pub fn trilinear_ratio(oracle: &dyn ScOracle, x: &Vector, h: [&Vector; 3]) -> Result<f64> {
    let model = LocalModel::at(oracle, x)?;
    let mut u = Vec::with_capacity(3);
    for v in h {
        u.push(v / model.geometry.primal_norm(v)?);
    }
    let d3 = third_derivative(oracle, x, &u[0], &u[1], &u[2])?.abs();
    let m = oracle.sc_constant();
    Ok(if m == 0.0 { d3 } else { d3 / (2.0 * m) })
}

/// Bounds relating `x` and `y` through `r = ||y - x||_x`: the lower and upper
/// function bounds, the gradient-difference bound, norm compatibility and
/// the Hessian sandwich. Bounds that need `M_f r < 1` are skipped outside.
pub fn pair_inequalities(oracle: &dyn ScOracle, x: &Vector, y: &Vector) -> Result<Vec<Inequality>> {
    let m = oracle.sc_constant();
    let mx = LocalModel::at(oracle, x)?;
    let fy = oracle.evaluate(y)?;
    let h = y - x;
    let r = mx.geometry.primal_norm(&h)?;
    let linear = mx.value + mx.gradient.dot(&h);
    let mut out = vec![Inequality::new("lower bound", linear + omega_scaled(m, r), fy.value)];
    let mr = m * r;
    if mr < 1.0 {
        let shrink = 1.0 - mr;
        out.push(Inequality::new("upper bound", fy.value, linear + omega_star_scaled(m, r)));
        let gd = mx.geometry.dual_norm(&(&fy.gradient - &mx.gradient))?;
        out.push(Inequality::new("gradient difference", gd, r / shrink));
        let gy = LocalGeometry::from_matrix(fy.hessian.clone())?;
        out.push(Inequality::new("norm compatibility", gy.primal_norm(&h)?, r / shrink));
        // spectrum of H(y) in the metric of H(x)
        let linv = mx.geometry.factor().try_inverse().ok_or(crate::Error::NotPositiveDefinite)?;
        let rel = &linv * &fy.hessian * linv.transpose();
        let eig = ((&rel + rel.transpose()) * 0.5).symmetric_eigenvalues();
        out.push(Inequality::new("hessian lower sandwich", shrink * shrink, eig.min()));
        out.push(Inequality::new("hessian upper sandwich", eig.max(), 1.0 / (shrink * shrink)));
    }
    Ok(out)
}

/// `f(x) - f* <= omega_*(M lambda)/M^2` and `||x - x*||_x <= lambda/(1 - M lambda)`
/// where `M lambda < 1`.
pub fn optimum_inequalities(oracle: &dyn ScOracle, x: &Vector, x_star: &Vector, f_star: f64) -> Result<Vec<Inequality>> {
    let m = oracle.sc_constant();
    let model = LocalModel::at(oracle, x)?;
    let lam = model.lambda()?;
    if m * lam >= 1.0 {
        return Ok(Vec::new());
    }
    let dist = model.geometry.primal_norm(&(x - x_star))?;
    Ok(vec![
        Inequality::new("function gap bound", model.value - f_star, omega_star_scaled(m, lam)),
        Inequality::new("distance bound", dist, lam / (1.0 - m * lam)),
    ])
}

/// `<F''(x)^{-1} F'(x), F'(x)> <= nu` and, for `y` in the closure of the
/// domain, `<F'(x), y - x> <= nu`.
pub fn barrier_inequalities(barrier: &dyn Barrier, x: &Vector, y: &Vector) -> Result<Vec<Inequality>> {
    let model = LocalModel::at(barrier, x)?;
    let lam = model.lambda()?;
    Ok(vec![
        Inequality::new("barrier gradient bound", lam * lam, barrier.nu()),
        Inequality::new("barrier direction bound", model.gradient.dot(&(y - x)), barrier.nu()),
    ])
}

/// Conjugate derivatives at `s`: relative gradient error against central
/// differences of the conjugate value, and the largest entry of
/// `F''(x(s)) F_*''(s) - I`.
pub fn conjugate_errors<B: Barrier>(conj: &Conjugate<B>, s: &Vector) -> Result<(f64, f64)> {
    let e = conj.evaluate(s)?;
    let n = s.len();
    let t = 1e-5;
    let mut fd = DVector::zeros(n);
    for j in 0..n {
        let mut sp = s.clone();
        let mut sm = s.clone();
        sp[j] += t;
        sm[j] -= t;
        fd[j] = (conj.value(&sp)? - conj.value(&sm)?) / (2.0 * t);
    }
    let grad_err = (&fd - &e.gradient).norm() / e.gradient.norm().max(1.0);
    let hx = conj.barrier.evaluate(&e.gradient)?.hessian;
    let hess_err = (hx * &e.hessian - DMatrix::identity(n, n)).amax();
    Ok((grad_err, hess_err))
}

fn normal_vector(n: usize, rng: &mut ChaCha8Rng) -> Vector {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Random local-unit direction at `x`.
pub fn local_direction(oracle: &dyn ScOracle, x: &Vector, rng: &mut ChaCha8Rng) -> Result<Vector> {
    let model = LocalModel::at(oracle, x)?;
    let d = normal_vector(x.len(), rng);
    let r = model.geometry.primal_norm(&d)?;
    Ok(d / r)
}

/// Random walk of up to five Dikin steps of local length `0.9/M_f` (unit
/// Euclidean steps when `M_f = 0`), which never leaves the domain.
pub fn sample_interior(oracle: &dyn ScOracle, start: &Vector, rng: &mut ChaCha8Rng) -> Result<Vector> {
    let m = oracle.sc_constant();
    let mut x = start.clone();
    for _ in 0..rng.gen_range(0..=5) {
        let len = if m > 0.0 { rng.gen_range(0.0..0.9) / m } else { rng.gen_range(0.0..1.0) };
        x += local_direction(oracle, &x, rng)? * len;
    }
    Ok(x)
}

/// Point where the ray from `x` along `d` leaves the domain.
pub fn boundary_point(oracle: &dyn ScOracle, x: &Vector, d: &Vector) -> Option<Vector> {
    let mut hi = 1.0;
    while oracle.in_domain(&(x + d * hi)) {
        hi *= 2.0;
        if hi > 1e12 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if oracle.in_domain(&(x + d * mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(x + d * lo)
}

/// Aggregate of one sampled check.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub cases: usize,
    pub violations: usize,
    /// Largest measured error, or largest `lhs - rhs` for inequalities.
    pub worst: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub instance: String,
    pub checks: Vec<Check>,
}

impl AuditReport {
    pub fn ok(&self) -> bool {
        self.checks.iter().all(|c| c.violations == 0)
    }

    fn record(&mut self, name: &str, error: f64, tol: f64) {
        self.push(name, error, error > tol);
    }

    fn record_inequality(&mut self, q: &Inequality, rel: f64, abs: f64) {
        self.push(q.name, q.lhs - q.rhs, !q.holds_within(rel, abs));
    }

    fn push(&mut self, name: &str, worst: f64, violated: bool) {
        let check = match self.checks.iter_mut().find(|c| c.name == name) {
            Some(c) => c,
            None => {
                self.checks.push(Check { name: name.into(), cases: 0, violations: 0, worst: f64::NEG_INFINITY });
                self.checks.last_mut().expect("just pushed")
            }
        };
        check.cases += 1;
        check.worst = check.worst.max(worst);
        check.violations += usize::from(violated);
    }
}

/// Runs every applicable check at `samples` random interior points.
pub fn audit(inst: &ProblemInstance, samples: usize, seed: u64) -> Result<AuditReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let oracle = inst.oracle.as_ref();
    let m = oracle.sc_constant();
    let reference = inst.x_star.clone().unwrap_or_else(|| inst.x0.clone());
    let mut report = AuditReport { instance: inst.spec.name.clone(), checks: Vec::new() };
    for _ in 0..samples {
        let x = sample_interior(oracle, &reference, &mut rng)?;
        report.record("gradient vs finite differences", gradient_fd_error(oracle, &x)?, 1e-5);
        report.record("hessian vs finite differences", hessian_fd_error(oracle, &x)?, 1e-4);
        let h = local_direction(oracle, &x, &mut rng)?;
        let def_tol = if m == 0.0 { 1e-6 } else { 1.0 + 5e-4 };
        report.record("third derivative bound", definition_ratio(oracle, &x, &h)?, def_tol);
        let hs: Vec<Vector> = (0..3).map(|_| normal_vector(x.len(), &mut rng)).collect();
        let tri_tol = if m == 0.0 { 1e-4 } else { 1.0 + 1e-2 };
        report.record("trilinear bound", trilinear_ratio(oracle, &x, [&hs[0], &hs[1], &hs[2]])?, tri_tol);
        let r = if m > 0.0 { rng.gen_range(0.0..0.9) / m } else { rng.gen_range(0.0..2.0) };
        let y = &x + local_direction(oracle, &x, &mut rng)? * r;
        if oracle.in_domain(&y) {
            let abs = 1e-12 * (1.0 + oracle.value(&x)?.abs());
            for q in pair_inequalities(oracle, &x, &y)? {
                report.record_inequality(&q, 1e-9, abs);
            }
        }
        if let (Some(xs), Some(fs)) = (&inst.x_star, inst.f_star) {
            let near = if m > 0.0 { rng.gen_range(0.0..0.9) / m } else { 1.0 };
            let z = xs + local_direction(oracle, xs, &mut rng)? * near;
            if oracle.in_domain(&z) {
                for q in optimum_inequalities(oracle, &z, xs, fs)? {
                    report.record_inequality(&q, 1e-8, 1e-12 * (1.0 + fs.abs()));
                }
            }
        }
        if let Some(b) = &inst.barrier {
            let d = normal_vector(x.len(), &mut rng);
            if let Some(y) = boundary_point(b.as_ref(), &x, &d) {
                for q in barrier_inequalities(b.as_ref(), &x, &y)? {
                    report.record_inequality(&q, 1e-8, 1e-12);
                }
            }
            let conj = Conjugate::new(b.clone())?;
            let s = b.gradient(&x)?;
            let (ge, he) = conjugate_errors(&conj, &s)?;
            report.record("conjugate gradient vs finite differences", ge, 1e-5);
            report.record("conjugate hessian inverse", he, 1e-6);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::{zoo, ProblemSpec};

    #[test]
    fn zoo_instances_pass_the_audit() {
        for name in ["scalar-xlnx", "xlnx", "box-barrier", "simplex-barrier", "lse", "logistic", "quadratic"] {
            let inst = zoo(&ProblemSpec { n: 3, m: 6, ..ProblemSpec::named(name) }).unwrap();
            let rep = audit(&inst, 20, 5).unwrap();
            assert!(rep.ok(), "{name}: {:#?}", rep.checks.iter().filter(|c| c.violations > 0).collect::<Vec<_>>());
        }
    }

    #[test]
    fn understated_constant_is_flagged() {
        struct Cubic;
        impl ScOracle for Cubic {
            fn dim(&self) -> usize {
                1
            }
            // x - ln x has M_f = 1
            fn sc_constant(&self) -> f64 {
                0.5
            }
            fn in_domain(&self, x: &Vector) -> bool {
                x[0] > 0.0
            }
            fn evaluate(&self, x: &Vector) -> Result<crate::Evaluation> {
                crate::functions::XMinusLog { n: 1 }.evaluate(x)
            }
        }
        let x = DVector::from_element(1, 2.0);
        let ratio = definition_ratio(&Cubic, &x, &DVector::from_element(1, 1.0)).unwrap();
        assert!((ratio - 2.0).abs() < 1e-3);
    }
}

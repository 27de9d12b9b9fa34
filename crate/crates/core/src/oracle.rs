//! Self-concordant function oracles and the combinators built on them.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linops::{null_space, LocalGeometry};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Value, gradient and Hessian at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vector,
    pub hessian: Matrix,
}

/// A standard self-concordant function with known constant `M_f`:
/// `|D^3 f(x)[h,h,h]| <= 2 M_f <H h, h>^{3/2}`.
pub trait ScOracle: Send + Sync {
    fn dim(&self) -> usize;

    /// The constant `M_f`. Zero means quadratic.
    fn sc_constant(&self) -> f64;

    fn in_domain(&self, x: &Vector) -> bool;

    /// Full second-order information. Fails with `OutsideDomain` off the domain.
    fn evaluate(&self, x: &Vector) -> Result<Evaluation>;

    fn value(&self, x: &Vector) -> Result<f64> {
        Ok(self.evaluate(x)?.value)
    }

    fn gradient(&self, x: &Vector) -> Result<Vector> {
        Ok(self.evaluate(x)?.gradient)
    }
}

/// A self-concordant barrier with parameter `nu` (always `M_f = 1`).
pub trait Barrier: ScOracle {
    fn nu(&self) -> f64;

    /// Minimizer of the barrier, when known in closed form.
    fn analytic_center(&self) -> Option<Vector> {
        None
    }

    /// `argmax_x <s, x> - F(x)`, when it has a closed form.
    fn conjugate_point(&self, _s: &Vector) -> Option<Result<Vector>> {
        None
    }
}

macro_rules! forward_oracle {
    ($($ptr:ty),*) => {$(
        impl<T: ScOracle + ?Sized> ScOracle for $ptr {
            fn dim(&self) -> usize { (**self).dim() }
            fn sc_constant(&self) -> f64 { (**self).sc_constant() }
            fn in_domain(&self, x: &Vector) -> bool { (**self).in_domain(x) }
            fn evaluate(&self, x: &Vector) -> Result<Evaluation> { (**self).evaluate(x) }
            fn value(&self, x: &Vector) -> Result<f64> { (**self).value(x) }
            fn gradient(&self, x: &Vector) -> Result<Vector> { (**self).gradient(x) }
        }
        impl<T: Barrier + ?Sized> Barrier for $ptr {
            fn nu(&self) -> f64 { (**self).nu() }
            fn analytic_center(&self) -> Option<Vector> { (**self).analytic_center() }
            fn conjugate_point(&self, s: &Vector) -> Option<Result<Vector>> { (**self).conjugate_point(s) }
        }
    )*};
}

forward_oracle!(&T, Box<T>, Arc<T>);

/// Value, gradient and factored Hessian at an iterate.
#[derive(Debug, Clone)]
pub struct LocalModel {
    pub x: Vector,
    pub value: f64,
    pub gradient: Vector,
    pub geometry: LocalGeometry,
}

impl LocalModel {
    pub fn at(oracle: &dyn ScOracle, x: &Vector) -> Result<Self> {
        check_dim(oracle.dim(), x.len())?;
        if !oracle.in_domain(x) {
            return Err(Error::OutsideDomain);
        }
        let e = oracle.evaluate(x)?;
        if !e.value.is_finite() {
            return Err(Error::OutsideDomain);
        }
        Ok(LocalModel { x: x.clone(), value: e.value, gradient: e.gradient, geometry: LocalGeometry::from_matrix(e.hessian)? })
    }

    /// Newton decrement `||f'(x)||*_x`.
    pub fn lambda(&self) -> Result<f64> {
        self.geometry.dual_norm(&self.gradient)
    }

    /// `H^{-1} f'(x)`.
    pub fn newton_direction(&self) -> Result<Vector> {
        self.geometry.solve(&self.gradient)
    }
}

/// Newton decrement of `oracle` at `x`.
pub fn lambda(oracle: &dyn ScOracle, x: &Vector) -> Result<f64> {
    LocalModel::at(oracle, x)?.lambda()
}

/// `f(x) + t <c, x>`.
#[derive(Debug, Clone)]
pub struct Shifted<O> {
    pub base: O,
    pub c: Vector,
    pub t: f64,
}

pub fn shifted_oracle<O: ScOracle>(base: O, c: Vector, t: f64) -> Result<Shifted<O>> {
    check_dim(base.dim(), c.len())?;
    Ok(Shifted { base, c, t })
}

impl<O: ScOracle> ScOracle for Shifted<O> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn sc_constant(&self) -> f64 {
        self.base.sc_constant()
    }
    fn in_domain(&self, x: &Vector) -> bool {
        self.base.in_domain(x)
    }
    fn evaluate(&self, x: &Vector) -> Result<Evaluation> {
        let mut e = self.base.evaluate(x)?;
        e.value += self.t * self.c.dot(x);
        e.gradient.axpy(self.t, &self.c, 1.0);
        Ok(e)
    }
    fn value(&self, x: &Vector) -> Result<f64> {
        Ok(self.base.value(x)? + self.t * self.c.dot(x))
    }
}

/// `M_f^2 f`, which is standard self-concordant with constant 1.
#[derive(Debug, Clone)]
pub struct Normalized<O> {
    pub base: O,
    scale: f64,
}

pub fn normalize_to_standard<O: ScOracle>(base: O) -> Result<Normalized<O>> {
    let m = base.sc_constant();
    if !(m > 0.0) {
        return Err(Error::InvalidArgument("cannot normalize a function with M_f = 0".into()));
    }
    Ok(Normalized { base, scale: m * m })
}

impl<O: ScOracle> ScOracle for Normalized<O> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn sc_constant(&self) -> f64 {
        1.0
    }
    fn in_domain(&self, x: &Vector) -> bool {
        self.base.in_domain(x)
    }
    fn evaluate(&self, x: &Vector) -> Result<Evaluation> {
        let e = self.base.evaluate(x)?;
        Ok(Evaluation { value: self.scale * e.value, gradient: e.gradient * self.scale, hessian: e.hessian * self.scale })
    }
}

/// `g(A^T u)` for an `m x n` matrix `A`; a function of `u` in `R^m`.
#[derive(Debug, Clone)]
pub struct LinearComposition<O> {
    pub inner: O,
    pub a: Matrix,
}

impl<O: ScOracle> LinearComposition<O> {
    pub fn new(inner: O, a: Matrix) -> Result<Self> {
        check_dim(inner.dim(), a.ncols())?;
        Ok(LinearComposition { inner, a })
    }
}

impl<O: ScOracle> ScOracle for LinearComposition<O> {
    fn dim(&self) -> usize {
        self.a.nrows()
    }
    fn sc_constant(&self) -> f64 {
        self.inner.sc_constant()
    }
    fn in_domain(&self, u: &Vector) -> bool {
        u.len() == self.a.nrows() && self.inner.in_domain(&self.a.tr_mul(u))
    }
    fn evaluate(&self, u: &Vector) -> Result<Evaluation> {
        check_dim(self.dim(), u.len())?;
        let e = self.inner.evaluate(&self.a.tr_mul(u))?;
        let hessian = &self.a * e.hessian * self.a.transpose();
        Ok(Evaluation { value: e.value, gradient: &self.a * e.gradient, hessian: (&hessian + hessian.transpose()) * 0.5 })
    }
    fn value(&self, u: &Vector) -> Result<f64> {
        self.inner.value(&self.a.tr_mul(u))
    }
}

/// `f(origin + N w)` where the columns of `N` span the null space of a
/// constraint matrix, so `w` parametrizes an affine subspace.
#[derive(Debug, Clone)]
pub struct AffineRestricted<O> {
    pub base: O,
    pub origin: Vector,
    pub basis: Matrix,
}

impl<O: ScOracle> AffineRestricted<O> {
    /// Restriction to `{x : A x = A origin}`.
    pub fn through(base: O, a: &Matrix, origin: Vector) -> Result<Self> {
        check_dim(base.dim(), origin.len())?;
        check_dim(base.dim(), a.ncols())?;
        let basis = null_space(a)?;
        Ok(AffineRestricted { base, origin, basis })
    }

    pub fn lift(&self, w: &Vector) -> Vector {
        &self.origin + &self.basis * w
    }
}

impl<O: ScOracle> ScOracle for AffineRestricted<O> {
    fn dim(&self) -> usize {
        self.basis.ncols()
    }
    fn sc_constant(&self) -> f64 {
        self.base.sc_constant()
    }
    fn in_domain(&self, w: &Vector) -> bool {
        w.len() == self.dim() && self.base.in_domain(&self.lift(w))
    }
    fn evaluate(&self, w: &Vector) -> Result<Evaluation> {
        check_dim(self.dim(), w.len())?;
        let e = self.base.evaluate(&self.lift(w))?;
        let hessian = self.basis.tr_mul(&(e.hessian * &self.basis));
        Ok(Evaluation {
            value: e.value,
            gradient: self.basis.tr_mul(&e.gradient),
            hessian: (&hessian + hessian.transpose()) * 0.5,
        })
    }
    fn value(&self, w: &Vector) -> Result<f64> {
        self.base.value(&self.lift(w))
    }
}

/// `F(x + center) - F(center)`: moves `center` to the origin.
#[derive(Debug, Clone)]
pub struct Translated<B> {
    pub base: B,
    pub center: Vector,
    offset: f64,
}

impl<B: Barrier> Translated<B> {
    pub fn new(base: B, center: Vector) -> Result<Self> {
        check_dim(base.dim(), center.len())?;
        let offset = base.value(&center)?;
        Ok(Translated { base, center, offset })
    }

    /// Translation to the analytic center, so that `F(0) = 0` and `F'(0) = 0`.
    pub fn to_center(base: B) -> Result<Self> {
        let center = match base.analytic_center() {
            Some(c) => c,
            None => {
                return Err(Error::InvalidArgument("barrier does not expose its analytic center".into()))
            }
        };
        Self::new(base, center)
    }
}

impl<B: Barrier> ScOracle for Translated<B> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn sc_constant(&self) -> f64 {
        self.base.sc_constant()
    }
    fn in_domain(&self, x: &Vector) -> bool {
        x.len() == self.dim() && self.base.in_domain(&(x + &self.center))
    }
    fn evaluate(&self, x: &Vector) -> Result<Evaluation> {
        check_dim(self.dim(), x.len())?;
        let mut e = self.base.evaluate(&(x + &self.center))?;
        e.value -= self.offset;
        Ok(e)
    }
    fn value(&self, x: &Vector) -> Result<f64> {
        Ok(self.base.value(&(x + &self.center))? - self.offset)
    }
}

impl<B: Barrier> Barrier for Translated<B> {
    fn nu(&self) -> f64 {
        self.base.nu()
    }
    fn analytic_center(&self) -> Option<Vector> {
        self.base.analytic_center().map(|c| c - &self.center)
    }
    fn conjugate_point(&self, s: &Vector) -> Option<Result<Vector>> {
        self.base.conjugate_point(s).map(|r| r.map(|x| x - &self.center))
    }
}

/// `F(x / (1 - delta))`: the barrier of the shrunken set `(1 - delta) Q`.
#[derive(Debug, Clone)]
pub struct Shrunk<B> {
    pub base: B,
    pub delta: f64,
}

impl<B: Barrier> ScOracle for Shrunk<B> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn sc_constant(&self) -> f64 {
        self.base.sc_constant()
    }
    fn in_domain(&self, x: &Vector) -> bool {
        self.base.in_domain(&(x / (1.0 - self.delta)))
    }
    fn evaluate(&self, x: &Vector) -> Result<Evaluation> {
        let s = 1.0 / (1.0 - self.delta);
        let e = self.base.evaluate(&(x * s))?;
        Ok(Evaluation { value: e.value, gradient: e.gradient * s, hessian: e.hessian * (s * s) })
    }
}

impl<B: Barrier> Barrier for Shrunk<B> {
    fn nu(&self) -> f64 {
        self.base.nu()
    }
    fn analytic_center(&self) -> Option<Vector> {
        self.base.analytic_center().map(|c| c * (1.0 - self.delta))
    }
    fn conjugate_point(&self, s: &Vector) -> Option<Result<Vector>> {
        let k = 1.0 - self.delta;
        self.base.conjugate_point(&(s * k)).map(|r| r.map(|x| x * k))
    }
}

/// Fenchel conjugate `F_*(s) = sup_x <s, x> - F(x)` of a barrier.
///
/// The maximizer `x(s)` comes from the barrier's closed form when it has one,
/// and otherwise from damped Newton on `F(x) - <s, x>` run to
/// `lambda <= 1e-12`. Then `F_*' = x(s)` and `F_*'' = [F''(x(s))]^{-1}`.
#[derive(Debug, Clone)]
pub struct Conjugate<B> {
    pub barrier: B,
    pub start: Vector,
}

pub const CONJUGATE_TOL: f64 = 1e-12;

impl<B: Barrier> Conjugate<B> {
    pub fn new(barrier: B) -> Result<Self> {
        let start = barrier.analytic_center().unwrap_or_else(|| Vector::zeros(barrier.dim()));
        if !barrier.in_domain(&start) {
            return Err(Error::InvalidArgument("conjugate needs an interior starting point".into()));
        }
        Ok(Conjugate { barrier, start })
    }

    /// The maximizer `x(s)`.
    pub fn argmax(&self, s: &Vector) -> Result<Vector> {
        check_dim(self.barrier.dim(), s.len())?;
        if let Some(x) = self.barrier.conjugate_point(s) {
            return x;
        }
        let target = shifted_oracle(&self.barrier, -s.clone(), 1.0)?;
        let mut x = self.start.clone();
        for _ in 0..500 {
            let model = LocalModel::at(&target, &x)?;
            let lam = model.lambda()?;
            let dir = model.newton_direction()?;
            if lam <= CONJUGATE_TOL {
                return Ok(x);
            }
            let step = if lam < 0.25 { 1.0 } else { 1.0 / (1.0 + lam) };
            x -= dir * step;
        }
        Err(Error::RootFinding("conjugate maximizer did not converge".into()))
    }
}

impl<B: Barrier> ScOracle for Conjugate<B> {
    fn dim(&self) -> usize {
        self.barrier.dim()
    }
    fn sc_constant(&self) -> f64 {
        self.barrier.sc_constant()
    }
    fn in_domain(&self, s: &Vector) -> bool {
        s.len() == self.dim() && s.iter().all(|v| v.is_finite())
    }
    fn evaluate(&self, s: &Vector) -> Result<Evaluation> {
        let x = self.argmax(s)?;
        let e = self.barrier.evaluate(&x)?;
        let geometry = LocalGeometry::from_matrix(e.hessian)?;
        Ok(Evaluation { value: s.dot(&x) - e.value, gradient: x, hessian: geometry.inverse() })
    }
    fn value(&self, s: &Vector) -> Result<f64> {
        let x = self.argmax(s)?;
        Ok(s.dot(&x) - self.barrier.value(&x)?)
    }
}

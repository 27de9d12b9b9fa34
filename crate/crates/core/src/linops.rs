//! Local norms induced by a Hessian.
//!
//! Everything goes through a Cholesky factor `H = L L^T` computed once per
//! point: `||h||_x = ||L^T h||`, `||s||*_x = ||L^{-1} s||`, and Newton
//! directions are `L^{-T} L^{-1} s` followed by one step of iterative
//! refinement.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_dim, Error, Result};

/// Condition estimate above which a geometry is flagged as ill-conditioned.
pub const ILL_CONDITIONED: f64 = 1e10;
const SYMMETRY_TOL: f64 = 1e-12;

/// A symmetric matrix that is expected to be positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

impl SpdMatrix {
    /// Accepts a square matrix whose asymmetry is below `1e-12` relative to its
    /// largest entry and stores its exact symmetric part.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let asym = (&m - m.transpose()).amax() / scale;
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(SpdMatrix((&m + m.transpose()) * 0.5))
    }

    pub fn identity(n: usize) -> Self {
        SpdMatrix(DMatrix::identity(n, n))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// Cholesky-factored Hessian at a point, with the local norms it induces.
#[derive(Debug, Clone)]
pub struct LocalGeometry {
    hessian: SpdMatrix,
    chol: Cholesky<f64, Dyn>,
    condition: f64,
}

impl LocalGeometry {
    pub fn new(hessian: SpdMatrix) -> Result<Self> {
        let chol = Cholesky::new(hessian.matrix().clone()).ok_or(Error::NotPositiveDefinite)?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        if !(lo > 0.0) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        let condition = if diag.is_empty() { 1.0 } else { (hi / lo).powi(2) };
        Ok(LocalGeometry { hessian, chol, condition })
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        Self::new(SpdMatrix::new(m)?)
    }

    pub fn dim(&self) -> usize {
        self.hessian.dim()
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        self.hessian.matrix()
    }

    /// Lower-triangular Cholesky factor.
    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Cheap lower estimate of the spectral condition number, from the
    /// diagonal of the Cholesky factor.
    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    pub fn is_ill_conditioned(&self) -> bool {
        self.condition > ILL_CONDITIONED
    }

    /// `<H h, h>^{1/2}`.
    pub fn primal_norm(&self, h: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), h.len())?;
        Ok(self.chol.l().tr_mul(h).norm())
    }

    /// `<s, H^{-1} s>^{1/2}`.
    pub fn dual_norm(&self, s: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), s.len())?;
        let l = self.chol.l_dirty();
        let w = l.solve_lower_triangular(s).ok_or(Error::NotPositiveDefinite)?;
        Ok(w.norm())
    }

    /// `H^{-1} s` with one step of iterative refinement.
    pub fn solve(&self, s: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), s.len())?;
        let mut d = self.chol.solve(s);
        let r = s - self.hessian.matrix() * &d;
        d += self.chol.solve(&r);
        if d.iter().all(|v| v.is_finite()) {
            Ok(d)
        } else {
            Err(Error::NotPositiveDefinite)
        }
    }

    /// `H^{-1} M` column by column.
    pub fn solve_matrix(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), m.nrows())?;
        let mut out = self.chol.solve(m);
        let r = m - self.hessian.matrix() * &out;
        out += self.chol.solve(&r);
        Ok(out)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let inv = self.chol.inverse();
        (&inv + inv.transpose()) * 0.5
    }
}

/// Orthonormal basis of the null space of `a`, from a Householder QR of the
/// zero-padded square matrix `[a^T 0]`. Fails when `a` has dependent rows.
pub fn null_space(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (m, n) = a.shape();
    if m > n {
        return Err(Error::RankDeficient((n..m).collect()));
    }
    let mut padded = DMatrix::zeros(n, n);
    padded.view_mut((0, 0), (n, m)).copy_from(&a.transpose());
    let qr = padded.qr();
    let r = qr.r();
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let dependent: Vec<usize> = (0..m).filter(|&i| r[(i, i)].abs() <= 1e-12 * scale * n as f64).collect();
    if !dependent.is_empty() {
        return Err(Error::RankDeficient(dependent));
    }
    let q = qr.q();
    Ok(q.columns(m, n - m).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms_on_diagonal_hessian() {
        let g = LocalGeometry::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]))).unwrap();
        let h = DVector::from_vec(vec![1.0, 1.0]);
        assert!((g.primal_norm(&h).unwrap() - 13f64.sqrt()).abs() < 1e-14);
        assert!((g.dual_norm(&h).unwrap() - (0.25f64 + 1.0 / 9.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn indefinite_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(LocalGeometry::from_matrix(m), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn asymmetry_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(SpdMatrix::new(m), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn ill_conditioning_is_flagged() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-12]));
        let g = LocalGeometry::from_matrix(m).unwrap();
        assert!(g.is_ill_conditioned());
    }

    #[test]
    fn null_space_is_orthogonal_to_rows() {
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 0.0, -1.0, 0.5, 0.0, 3.0, 1.0]);
        let n = null_space(&a).unwrap();
        assert_eq!(n.shape(), (4, 2));
        assert!((&a * &n).amax() < 1e-13);
        assert!((n.transpose() * &n - DMatrix::identity(2, 2)).amax() < 1e-13);
    }

    #[test]
    fn null_space_reports_dependent_rows() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(null_space(&a), Err(Error::RankDeficient(rows)) if rows == vec![1]));
    }
}

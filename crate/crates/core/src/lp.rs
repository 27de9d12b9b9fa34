//! Standard-form linear programs: `min <c, x>` s.t. `A x = b`, `x >= 0`.
//!
//! Holds the random generator used by the instance zoo, a brute-force vertex
//! enumeration for small problems, and the reduction of the constraint matrix
//! to the form `(I_m, B)` by Gauss-Jordan elimination with column pivoting.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::oracle::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpData {
    pub a: Matrix,
    pub b: Vector,
    pub c: Vector,
}

impl LpData {
    pub fn new(a: Matrix, b: Vector, c: Vector) -> Result<Self> {
        check_dim(a.nrows(), b.len())?;
        check_dim(a.ncols(), c.len())?;
        Ok(LpData { a, b, c })
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }
}

/// Optimal vertex and the dual solution of its basis.
#[derive(Debug, Clone)]
pub struct LpOptimum {
    pub x: Vector,
    pub y: Vector,
    pub value: f64,
    pub basis: Vec<usize>,
}

/// Random LP with strictly feasible primal and dual, hence a finite optimum:
/// `b = A x~` and `c = A^T y~ + s~` with `x~, s~` in `[0.5, 1.5]^n`.
pub fn random_lp<R: Rng>(n: usize, m: usize, rng: &mut R) -> Result<LpData> {
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!("need 0 < m <= n, got m={m}, n={n}")));
    }
    let a = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = DVector::from_fn(n, |_, _| rng.gen_range(0.5..1.5));
    let y = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let s = DVector::from_fn(n, |_, _| rng.gen_range(0.5..1.5));
    let b = &a * x;
    let c = a.tr_mul(&y) + s;
    LpData::new(a, b, c)
}

fn combinations(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), f);
}

/// Best basic feasible solution over all `C(n, m)` bases. Exponential; meant
/// for `n <= 12` or so. Returns `None` when no basis is primal feasible.
pub fn enumerate_optimum(lp: &LpData) -> Option<LpOptimum> {
    let (m, n) = lp.a.shape();
    let scale = lp.b.amax().max(1.0);
    let mut best: Option<LpOptimum> = None;
    combinations(n, m, &mut |basis| {
        let ab = DMatrix::from_fn(m, m, |i, j| lp.a[(i, basis[j])]);
        let lu = ab.clone().lu();
        let Some(xb) = lu.solve(&lp.b) else { return };
        let sv = ab.singular_values();
        if sv.min() <= 1e-10 * sv.max() || xb.iter().any(|&v| v < -1e-9 * scale) {
            return;
        }
        let mut x = DVector::zeros(n);
        for (j, &col) in basis.iter().enumerate() {
            x[col] = xb[j].max(0.0);
        }
        let value = lp.c.dot(&x);
        if best.as_ref().is_none_or(|b| value < b.value - 1e-12 * (1.0 + value.abs())) {
            let cb = DVector::from_fn(m, |j, _| lp.c[basis[j]]);
            let y = ab.transpose().lu().solve(&cb).unwrap_or_else(|| DVector::zeros(m));
            best = Some(LpOptimum { x, y, value, basis: basis.to_vec() });
        }
    });
    best
}

/// `M A P = (I_m, B)` for an invertible row transform `M` and a column
/// permutation `P`; column `j` of the reduced matrix is column `perm[j]` of `A`.
#[derive(Debug, Clone)]
pub struct NormalForm {
    pub transform: Matrix,
    pub perm: Vec<usize>,
    pub block: Matrix,
}

impl NormalForm {
    pub fn rows(&self) -> usize {
        self.transform.nrows()
    }

    pub fn cols(&self) -> usize {
        self.perm.len()
    }

    /// `P^T v`: reorders a vector of the original columns.
    pub fn permute(&self, v: &Vector) -> Vector {
        DVector::from_fn(self.perm.len(), |j, _| v[self.perm[j]])
    }

    /// `P v`: scatters a reordered vector back.
    pub fn unpermute(&self, v: &Vector) -> Vector {
        let mut out = DVector::zeros(v.len());
        for (j, &col) in self.perm.iter().enumerate() {
            out[col] = v[j];
        }
        out
    }

    /// `(I_m, B)`.
    pub fn reduced_matrix(&self) -> Matrix {
        let m = self.rows();
        let mut out = DMatrix::zeros(m, self.cols());
        out.view_mut((0, 0), (m, m)).fill_with_identity();
        out.view_mut((0, m), (m, self.cols() - m)).copy_from(&self.block);
        out
    }
}

struct Elimination {
    work: Matrix,
    pivots: Vec<Option<usize>>,
}

/// Gauss-Jordan on the first `ncols` columns of `work`, row by row, pivoting
/// on the largest remaining entry of each row.
fn eliminate(mut work: Matrix, ncols: usize, tol: f64) -> Elimination {
    let m = work.nrows();
    let mut used = vec![false; ncols];
    let mut pivots = vec![None; m];
    for k in 0..m {
        let mut best = (0.0, None);
        for j in (0..ncols).filter(|&j| !used[j]) {
            let v = work[(k, j)].abs();
            if v > best.0 {
                best = (v, Some(j));
            }
        }
        let (mag, Some(col)) = best else { continue };
        if mag <= tol {
            continue;
        }
        used[col] = true;
        pivots[k] = Some(col);
        let p = work[(k, col)];
        let row = work.row(k) / p;
        work.set_row(k, &row);
        for i in (0..m).filter(|&i| i != k) {
            let f = work[(i, col)];
            if f != 0.0 {
                let r = work.row(i) - &row * f;
                work.set_row(i, &r);
            }
        }
    }
    Elimination { work, pivots }
}

fn tolerance(a: &Matrix) -> f64 {
    1e-10 * a.amax().max(f64::MIN_POSITIVE) * a.nrows().max(a.ncols()) as f64
}

/// Brings `A` to the form `(I_m, B)`. Fails with the indices of dependent rows.
pub fn normal_form(a: &Matrix) -> Result<NormalForm> {
    let (m, n) = a.shape();
    let mut work = DMatrix::zeros(m, n + m);
    work.view_mut((0, 0), (m, n)).copy_from(a);
    work.view_mut((0, n), (m, m)).fill_with_identity();
    let elim = eliminate(work, n, tolerance(a));
    let dependent: Vec<usize> = (0..m).filter(|&k| elim.pivots[k].is_none()).collect();
    if !dependent.is_empty() {
        return Err(Error::RankDeficient(dependent));
    }
    let mut perm: Vec<usize> = elim.pivots.iter().map(|p| p.expect("checked")).collect();
    let rest: Vec<usize> = (0..n).filter(|j| !perm.contains(j)).collect();
    perm.extend(&rest);
    let transform = elim.work.columns(n, m).into_owned();
    let block = DMatrix::from_fn(m, n - m, |i, j| elim.work[(i, rest[j])]);
    Ok(NormalForm { transform, perm, block })
}

/// Drops rows of `A x = b` that depend on earlier ones. Fails if a dropped
/// row is inconsistent. Returns the kept rows and the indices dropped.
pub fn independent_rows(a: &Matrix, b: &Vector) -> Result<(Matrix, Vector, Vec<usize>)> {
    check_dim(a.nrows(), b.len())?;
    let (m, n) = a.shape();
    let mut work = DMatrix::zeros(m, n + 1);
    work.view_mut((0, 0), (m, n)).copy_from(a);
    work.set_column(n, b);
    let tol = tolerance(a);
    let elim = eliminate(work, n, tol);
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    let b_scale = b.amax().max(1.0);
    for k in 0..m {
        if elim.pivots[k].is_some() {
            keep.push(k);
        } else if elim.work[(k, n)].abs() > 1e-8 * b_scale {
            return Err(Error::Inconsistent(format!("row {k} contradicts the others")));
        } else {
            dropped.push(k);
        }
    }
    let a_kept = DMatrix::from_fn(keep.len(), n, |i, j| a[(keep[i], j)]);
    let b_kept = DVector::from_fn(keep.len(), |i, _| b[keep[i]]);
    Ok((a_kept, b_kept, dropped))
}

/// Primal-dual pair recovered from an embedding solution.
#[derive(Debug, Clone, Serialize)]
pub struct LpPair {
    pub x: Vector,
    pub y: Vector,
    pub s: Vector,
    pub tau: f64,
    pub primal_value: f64,
    pub dual_value: f64,
    /// `<c, x> - <b, y>`.
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// Homogeneous system whose nonzero nonnegative solutions `z = (x, s, tau)`
/// with `tau > 0` are optimal primal-dual pairs scaled by `tau`, normalized to
/// the simplex and written in the `2n` coordinates `z_bar` (the last
/// coordinate is `1 - <e, z_bar>`).
#[derive(Debug, Clone)]
pub struct SelfDualEmbedding {
    pub lp: LpData,
    pub normal: NormalForm,
    /// `(n+1) x (2n+1)` homogeneous system.
    pub q: Matrix,
    /// `Q_bar - q_bar e^T` with dependent rows removed.
    pub reduced_a: Matrix,
    /// `-q_bar` with the same rows.
    pub reduced_b: Vector,
    pub dropped_rows: Vec<usize>,
}

pub fn lp_to_feasibility(lp: &LpData) -> Result<SelfDualEmbedding> {
    let (m, n) = lp.a.shape();
    let normal = normal_form(&lp.a)?;
    let b = &normal.transform * &lp.b;
    let c = normal.permute(&lp.c);
    let c1 = c.rows(0, m).into_owned();
    let c2 = c.rows(m, n - m).into_owned();
    let blk = &normal.block;
    let mut q = DMatrix::zeros(n + 1, 2 * n + 1);
    // duality gap row: <c, x> + <b, s_1> - tau <b, c_1> = 0
    for j in 0..n {
        q[(0, j)] = c[j];
    }
    for i in 0..m {
        q[(0, n + i)] = b[i];
    }
    q[(0, 2 * n)] = -b.dot(&c1);
    // primal rows: (I, B) x - tau b = 0
    q.view_mut((1, 0), (m, n)).copy_from(&normal.reduced_matrix());
    for i in 0..m {
        q[(1 + i, 2 * n)] = -b[i];
    }
    // dual rows: s_2 - B^T s_1 - tau (c_2 - B^T c_1) = 0
    let shift = &c2 - blk.tr_mul(&c1);
    for i in 0..n - m {
        for j in 0..m {
            q[(1 + m + i, n + j)] = -blk[(j, i)];
        }
        q[(1 + m + i, n + m + i)] = 1.0;
        q[(1 + m + i, 2 * n)] = -shift[i];
    }
    let qbar = q.columns(0, 2 * n).into_owned();
    let last = q.column(2 * n).into_owned();
    let full_a = &qbar - &last * DMatrix::from_element(1, 2 * n, 1.0);
    let full_b = -last;
    let (reduced_a, reduced_b, dropped_rows) = independent_rows(&full_a, &full_b)?;
    Ok(SelfDualEmbedding { lp: lp.clone(), normal, q, reduced_a, reduced_b, dropped_rows })
}

impl SelfDualEmbedding {
    pub fn reduced_dim(&self) -> usize {
        self.reduced_a.ncols()
    }

    /// Removes the constraint residual of an approximate solution by a
    /// least-norm correction on the coordinates above `threshold`, leaving
    /// the rest at zero.
    pub fn polish(&self, z_bar: &Vector, threshold: f64) -> Vector {
        let support: Vec<usize> = (0..z_bar.len()).filter(|&i| z_bar[i] > threshold).collect();
        let mut z = DVector::from_fn(z_bar.len(), |i, _| if z_bar[i] > threshold { z_bar[i] } else { 0.0 });
        if support.is_empty() {
            return z;
        }
        let a_s = DMatrix::from_fn(self.reduced_a.nrows(), support.len(), |i, j| self.reduced_a[(i, support[j])]);
        let Ok(pinv) = a_s.pseudo_inverse(1e-12) else { return z };
        for _ in 0..2 {
            let r = &self.reduced_a * &z - &self.reduced_b;
            let d = &pinv * r;
            for (j, &i) in support.iter().enumerate() {
                z[i] -= d[j];
            }
        }
        z
    }

    /// Recovers `(x, y, s)` for the original data from a point of the reduced
    /// system. Fails when `tau` is not positive.
    pub fn map_back(&self, z_bar: &Vector) -> Result<LpPair> {
        let n = self.lp.cols();
        let m = self.lp.rows();
        check_dim(2 * n, z_bar.len())?;
        let tau = 1.0 - z_bar.sum();
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!("embedding solution has tau = {tau}")));
        }
        let xp = z_bar.rows(0, n) / tau;
        let sp = z_bar.rows(n, n) / tau;
        let c = self.normal.permute(&self.lp.c);
        let yp = c.rows(0, m) - sp.rows(0, m);
        let x = self.normal.unpermute(&xp);
        let s = self.normal.unpermute(&sp);
        let y = self.normal.transform.tr_mul(&yp);
        let primal_value = self.lp.c.dot(&x);
        let dual_value = self.lp.b.dot(&y);
        let primal_residual = (&self.lp.a * &x - &self.lp.b).norm();
        let dual_residual = (self.lp.a.tr_mul(&y) + &s - &self.lp.c).norm();
        Ok(LpPair { x, y, s, tau, primal_value, dual_value, gap: primal_value - dual_value, primal_residual, dual_residual })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normal_form_reproduces_identity_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lp = random_lp(6, 3, &mut rng).unwrap();
        let nf = normal_form(&lp.a).unwrap();
        let permuted = DMatrix::from_fn(3, 6, |i, j| lp.a[(i, nf.perm[j])]);
        let reduced = &nf.transform * permuted;
        assert!((reduced - nf.reduced_matrix()).amax() < 1e-12);
    }

    #[test]
    fn dependent_rows_are_reported() {
        let a = DMatrix::from_row_slice(3, 4, &[1.0, 0.0, 1.0, 2.0, 0.0, 1.0, 1.0, 0.0, 2.0, 1.0, 3.0, 4.0]);
        assert!(matches!(normal_form(&a), Err(Error::RankDeficient(rows)) if rows == vec![2]));
    }

    #[test]
    fn embedding_has_expected_shape() {
        let lp = LpData::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![1.0, 2.0]),
        )
        .unwrap();
        let emb = lp_to_feasibility(&lp).unwrap();
        assert_eq!(emb.q.shape(), (3, 5));
        assert_eq!(emb.reduced_dim(), 4);
    }

    #[test]
    fn optimal_pair_solves_homogeneous_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let lp = random_lp(5, 2, &mut rng).unwrap();
        let opt = enumerate_optimum(&lp).unwrap();
        let emb = lp_to_feasibility(&lp).unwrap();
        let s = &lp.c - lp.a.tr_mul(&opt.y);
        let xp = emb.normal.permute(&opt.x);
        let sp = emb.normal.permute(&s);
        let mut z = DVector::zeros(11);
        z.rows_mut(0, 5).copy_from(&xp);
        z.rows_mut(5, 5).copy_from(&sp);
        z[10] = 1.0;
        assert!((&emb.q * &z).amax() < 1e-9);
        let zbar = z.rows(0, 10) / z.sum();
        let back = emb.map_back(&zbar.into_owned()).unwrap();
        assert!(back.gap.abs() < 1e-9);
        assert!((back.x - opt.x).amax() < 1e-9);
    }
}

//! Named test problems, the problem-file format and the LP triplet format.
//!
//! Problem files are TOML. Every instance is rebuilt from its name, sizes,
//! seed and scalar parameters; explicit arrays override the generated data.
//!
//! ```toml
//! name = "lse"
//! n = 5
//! m = 10
//! seed = 1
//! mu = 0.1
//! sigma = 1.0
//! scale = 8.0
//! eps = 0.1
//! x0 = [0.5, -0.25, 1.0, 0.0, 2.0]   # optional
//! ```
//!
//! `a` (array of rows), `b` and `c` give explicit data for `lp` and
//! `simplex-feasibility` instances. The latter asks for a point of
//! `{z : a z = b}` in the simplex `{z >= 0, sum z <= 1}`; embedded LPs meet
//! it only on the boundary, so feasibility solvers stop on the residual. Floats are written in shortest
//! round-trip form, so save/load is lossless.
//!
//! LP triplet files list one entry per line, `#` starts a comment:
//!
//! ```text
//! lp <rows> <cols>
//! a <i> <j> <value>
//! b <i> <value>
//! c <j> <value>
//! ```
//!
//! Indices are zero-based and omitted entries are zero.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasibility::{embed_lp, FeasibilityInstance};
use crate::functions::{BoxBarrier, Logistic, Quadratic, RegularizedLse, SimplexBarrier, XMinusLog};
use crate::lp::{enumerate_optimum, random_lp, LpData, LpOptimum};
use crate::newton::{dnm_solve, NewtonConfig};
use crate::oracle::{Barrier, Matrix, ScOracle, Translated, Vector};

pub const NAMES: [&str; 11] = [
    "scalar-xlnx",
    "xlnx",
    "box-barrier",
    "simplex-barrier",
    "lse",
    "logistic",
    "quadratic",
    "lp-random",
    "lp",
    "box-feasibility",
    "simplex-feasibility",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProblemSpec {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub mu: f64,
    pub sigma: f64,
    /// Distance of the start point from the minimizer, in instance units.
    pub scale: f64,
    pub eps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        ProblemSpec {
            name: "scalar-xlnx".into(),
            n: 2,
            m: 4,
            seed: 0,
            mu: 0.1,
            sigma: 1.0,
            scale: 10.0,
            eps: 0.1,
            x0: None,
            a: None,
            b: None,
            c: None,
        }
    }
}

impl ProblemSpec {
    pub fn named(name: &str) -> Self {
        ProblemSpec { name: name.into(), ..Self::default() }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("problem file: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidArgument(format!("problem file: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn build(&self) -> Result<ProblemInstance> {
        zoo(self)
    }
}

/// A problem with everything the solvers and checks need.
#[derive(Clone)]
pub struct ProblemInstance {
    pub spec: ProblemSpec,
    pub oracle: Arc<dyn ScOracle>,
    pub barrier: Option<Arc<dyn Barrier>>,
    pub x0: Vector,
    pub x_star: Option<Vector>,
    pub f_star: Option<f64>,
    /// `(sigma_f, H_f)` in the Euclidean metric.
    pub lipschitz: Option<(f64, f64)>,
    pub lp: Option<(LpData, LpOptimum)>,
    pub feasibility: Option<FeasibilityInstance>,
}

impl std::fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("spec", &self.spec)
            .field("x0", &self.x0)
            .field("f_star", &self.f_star)
            .finish()
    }
}

impl ProblemInstance {
    fn plain(spec: &ProblemSpec, oracle: Arc<dyn ScOracle>, x0: Vector) -> Self {
        ProblemInstance {
            spec: spec.clone(),
            oracle,
            barrier: None,
            x0,
            x_star: None,
            f_star: None,
            lipschitz: None,
            lp: None,
            feasibility: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.oracle.dim()
    }

    /// `M_f^2 (f(x_0) - f*)`.
    pub fn delta(&self) -> Result<f64> {
        let fs = self.f_star.ok_or_else(|| Error::InvalidArgument(format!("{} has no known optimum", self.spec.name)))?;
        let m = self.oracle.sc_constant();
        Ok(m * m * (self.oracle.value(&self.x0)? - fs).max(0.0))
    }

    /// Fills `x*` and `f*` by a tight Newton solve.
    fn with_numeric_optimum(mut self) -> Result<Self> {
        let m = self.oracle.sc_constant();
        let tol = if m > 0.0 { 1e-13 / m } else { 1e-13 };
        let cfg = NewtonConfig { finish_tol: Some(tol), max_iters: 1_000_000, ..NewtonConfig::default() };
        let start = Vector::zeros(self.dim());
        let start = if self.oracle.in_domain(&start) { start } else { self.x0.clone() };
        let (x, _) = dnm_solve(self.oracle.as_ref(), &start, &cfg)?;
        self.f_star = Some(self.oracle.value(&x)?);
        self.x_star = Some(x);
        Ok(self)
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn unit_direction(n: usize, rng: &mut ChaCha8Rng) -> Vector {
    let v = DVector::from_fn(n, |_, _| normal(rng));
    let norm = v.norm();
    if norm > 0.0 {
        v / norm
    } else {
        DVector::from_element(n, 1.0 / (n as f64).sqrt())
    }
}

fn explicit_x0(spec: &ProblemSpec, n: usize) -> Result<Option<Vector>> {
    match &spec.x0 {
        None => Ok(None),
        Some(v) if v.len() == n => Ok(Some(DVector::from_column_slice(v))),
        Some(v) => Err(Error::DimensionMismatch { expected: n, got: v.len() }),
    }
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let m = rows.len();
    let n = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(a: &Matrix) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn explicit_data(spec: &ProblemSpec) -> Result<(Matrix, Vector, Option<Vector>)> {
    let a = spec.a.as_deref().ok_or_else(|| Error::InvalidArgument(format!("{} needs `a`", spec.name)))?;
    let b = spec.b.as_deref().ok_or_else(|| Error::InvalidArgument(format!("{} needs `b`", spec.name)))?;
    let c = spec.c.as_deref().map(DVector::from_column_slice);
    Ok((matrix_from_rows(a)?, DVector::from_column_slice(b), c))
}

/// Builds the named instance. See [`NAMES`].
pub fn zoo(spec: &ProblemSpec) -> Result<ProblemInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    if n == 0 && spec.name != "lp" && spec.name != "simplex-feasibility" {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    // fraction of the way from the center towards the boundary
    let reach = 1.0 - 1.0 / (1.0 + spec.scale.abs());
    match spec.name.as_str() {
        "scalar-xlnx" | "xlnx" => {
            let n = if spec.name == "scalar-xlnx" { 1 } else { n };
            let x0 = explicit_x0(spec, n)?.unwrap_or_else(|| DVector::from_element(n, spec.scale.abs().max(1e-3)));
            let mut inst = ProblemInstance::plain(spec, Arc::new(XMinusLog { n }), x0);
            inst.x_star = Some(DVector::from_element(n, 1.0));
            inst.f_star = Some(n as f64);
            Ok(inst)
        }
        "box-barrier" => {
            let f = Arc::new(BoxBarrier { n });
            let x0 = explicit_x0(spec, n)?.unwrap_or_else(|| DVector::from_fn(n, |_, _| reach * rng.gen_range(-1.0..1.0)));
            let mut inst = ProblemInstance::plain(spec, f.clone(), x0);
            inst.barrier = Some(f);
            inst.x_star = Some(DVector::zeros(n));
            inst.f_star = Some(0.0);
            Ok(inst)
        }
        "simplex-barrier" => {
            let f = Arc::new(SimplexBarrier { n });
            let center = f.analytic_center().expect("closed form");
            let x0 = explicit_x0(spec, n)?.unwrap_or_else(|| {
                let k = rng.gen_range(0..n);
                let mut vertex = DVector::zeros(n);
                vertex[k] = 1.0;
                &center + (vertex - &center) * reach
            });
            let mut inst = ProblemInstance::plain(spec, f.clone(), x0);
            inst.barrier = Some(f);
            inst.f_star = Some((n as f64 + 1.0) * (n as f64 + 1.0).ln());
            inst.x_star = Some(center);
            Ok(inst)
        }
        "lse" => {
            let a = DMatrix::from_fn(spec.m, n, |_, _| normal(&mut rng));
            let a = &a / crate::functions::spectral_norm(&a);
            let b = DVector::from_fn(spec.m, |_, _| 0.1 * normal(&mut rng));
            let dir = unit_direction(n, &mut rng);
            let f = RegularizedLse::new(a, b, spec.mu, spec.sigma)?;
            let h = f.lipschitz_hessian();
            let x0 = explicit_x0(spec, n)?.unwrap_or(dir * spec.scale);
            let mut inst = ProblemInstance::plain(spec, Arc::new(f), x0);
            inst.lipschitz = Some((spec.sigma, h));
            inst.with_numeric_optimum()
        }
        "logistic" => {
            let a = DMatrix::from_fn(spec.m, n, |_, _| normal(&mut rng));
            let w = unit_direction(n, &mut rng);
            let scores = &a * &w;
            let labels = DVector::from_fn(spec.m, |i, _| if scores[i] + 0.5 * normal(&mut rng) >= 0.0 { 1.0 } else { -1.0 });
            let dir = unit_direction(n, &mut rng);
            let f = Logistic::new(a, labels, spec.sigma)?;
            let h = f.lipschitz_hessian();
            let x0 = explicit_x0(spec, n)?.unwrap_or(dir * spec.scale);
            let mut inst = ProblemInstance::plain(spec, Arc::new(f), x0);
            inst.lipschitz = Some((spec.sigma, h));
            inst.with_numeric_optimum()
        }
        "quadratic" => {
            let g = DMatrix::from_fn(n, n, |_, _| normal(&mut rng));
            let q = (&g * g.transpose()) / n as f64 + DMatrix::identity(n, n) * spec.sigma;
            let linear = DVector::from_fn(n, |_, _| normal(&mut rng));
            let x_star = -q.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.solve(&linear);
            let f = Quadratic::new(q.clone(), linear)?;
            let dir = unit_direction(n, &mut rng);
            let x0 = explicit_x0(spec, n)?.unwrap_or(&x_star + dir * spec.scale);
            let f_star = f.value(&x_star)?;
            let sigma_f = q.symmetric_eigenvalues().min();
            let mut inst = ProblemInstance::plain(spec, Arc::new(f), x0);
            inst.x_star = Some(x_star);
            inst.f_star = Some(f_star);
            inst.lipschitz = Some((sigma_f, 0.0));
            Ok(inst)
        }
        "lp-random" | "lp" => {
            let lp = if spec.name == "lp" {
                let (a, b, c) = explicit_data(spec)?;
                LpData::new(a, b, c.ok_or_else(|| Error::InvalidArgument("lp needs `c`".into()))?)?
            } else {
                if spec.m == 0 || spec.m > n {
                    return Err(Error::InvalidArgument(format!("lp-random needs 0 < m <= n, got m={} n={n}", spec.m)));
                }
                random_lp(n, spec.m, &mut rng)?
            };
            let optimum =
                enumerate_optimum(&lp).ok_or_else(|| Error::Inconsistent("LP has no optimal vertex".into()))?;
            let emb = embed_lp(&lp)?;
            let barrier = emb.instance.barrier.clone();
            let x0 = DVector::zeros(barrier.dim());
            let mut inst = ProblemInstance::plain(spec, barrier.clone(), x0);
            inst.barrier = Some(barrier);
            inst.lp = Some((lp, optimum));
            inst.feasibility = Some(emb.instance);
            Ok(inst)
        }
        "box-feasibility" => {
            let feas = FeasibilityInstance::box_slab(n, spec.eps)?;
            let barrier = feas.barrier.clone();
            let mut inst = ProblemInstance::plain(spec, barrier.clone(), DVector::zeros(n));
            inst.barrier = Some(barrier);
            inst.feasibility = Some(feas);
            Ok(inst)
        }
        "simplex-feasibility" => {
            let (a, b, _) = explicit_data(spec)?;
            let d = a.ncols();
            let translated = Translated::to_center(SimplexBarrier { n: d })?;
            let b = b - &a * &translated.center;
            let barrier: Arc<dyn Barrier> = Arc::new(translated);
            let feas = FeasibilityInstance::new(barrier.clone(), a, b)?;
            let mut inst = ProblemInstance::plain(spec, barrier.clone(), DVector::zeros(d));
            inst.barrier = Some(barrier);
            inst.feasibility = Some(feas);
            Ok(inst)
        }
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

/// Instances of one family whose start points sit at the given scales.
pub fn scale_ladder(base: &ProblemSpec, scales: &[f64]) -> Result<Vec<ProblemInstance>> {
    scales.iter().map(|&s| zoo(&ProblemSpec { scale: s, x0: None, ..base.clone() })).collect()
}

/// Lower estimate of the diameter of `{x : f(x) <= level}` from rays through
/// `center` in `samples` random directions.
pub fn level_set_diameter(
    oracle: &dyn ScOracle,
    center: &Vector,
    level: f64,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let below = |x: &Vector| oracle.in_domain(x) && oracle.value(x).map_or(false, |v| v <= level);
    let reach = |d: &Vector| {
        let mut hi = 1.0;
        while below(&(center + d * hi)) && hi < 1e12 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if below(&(center + d * mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let mut best = 0.0f64;
    for _ in 0..samples.max(1) {
        let d = unit_direction(center.len(), rng);
        best = best.max(reach(&d) + reach(&-d));
    }
    Ok(best)
}

pub fn parse_lp_triplets(text: &str) -> Result<LpData> {
    let bad = |line: usize, msg: &str| Error::InvalidArgument(format!("LP file line {line}: {msg}"));
    let mut dims: Option<(usize, usize)> = None;
    let mut a = DMatrix::zeros(0, 0);
    let mut b = DVector::zeros(0);
    let mut c = DVector::zeros(0);
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let idx = |s: &str| s.parse::<usize>().map_err(|_| bad(line_no, "bad index"));
        let val = |s: &str| s.parse::<f64>().map_err(|_| bad(line_no, "bad value"));
        match (fields[0], dims) {
            ("lp", None) if fields.len() == 3 => {
                let (m, n) = (idx(fields[1])?, idx(fields[2])?);
                dims = Some((m, n));
                a = DMatrix::zeros(m, n);
                b = DVector::zeros(m);
                c = DVector::zeros(n);
            }
            ("lp", _) => return Err(bad(line_no, "expected one `lp <rows> <cols>` header")),
            (_, None) => return Err(bad(line_no, "entries before the `lp` header")),
            ("a", Some((m, n))) if fields.len() == 4 => {
                let (i, j) = (idx(fields[1])?, idx(fields[2])?);
                if i >= m || j >= n {
                    return Err(bad(line_no, "index out of range"));
                }
                a[(i, j)] = val(fields[3])?;
            }
            ("b", Some((m, _))) if fields.len() == 3 => {
                let i = idx(fields[1])?;
                if i >= m {
                    return Err(bad(line_no, "index out of range"));
                }
                b[i] = val(fields[2])?;
            }
            ("c", Some((_, n))) if fields.len() == 3 => {
                let j = idx(fields[1])?;
                if j >= n {
                    return Err(bad(line_no, "index out of range"));
                }
                c[j] = val(fields[2])?;
            }
            _ => return Err(bad(line_no, "unrecognized entry")),
        }
    }
    if dims.is_none() {
        return Err(Error::InvalidArgument("LP file has no `lp` header".into()));
    }
    LpData::new(a, b, c)
}

pub fn write_lp_triplets(lp: &LpData) -> String {
    let mut out = format!("lp {} {}\n", lp.rows(), lp.cols());
    for i in 0..lp.rows() {
        for j in 0..lp.cols() {
            if lp.a[(i, j)] != 0.0 {
                out += &format!("a {i} {j} {:?}\n", lp.a[(i, j)]);
            }
        }
    }
    for (i, v) in lp.b.iter().enumerate().filter(|(_, v)| **v != 0.0) {
        out += &format!("b {i} {v:?}\n");
    }
    for (j, v) in lp.c.iter().enumerate().filter(|(_, v)| **v != 0.0) {
        out += &format!("c {j} {v:?}\n");
    }
    out
}

//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always reach the output.
//! The process fails when a criterion fails that is not listed in
//! `KNOWN_FAILURES`; those are printed as FAIL and explained in the notes.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use common::{normal, rng};
use scopt::barrier::{dual_pc_solve, primal_pc_solve, BarrierConfig, DualBarrierProblem, PrimalBarrierProblem};
use scopt::bench::{calibrate_on, default_grids, param_search, run_experiment, ExperimentResult, ExperimentSpec, ParamNode};
use scopt::cubic::{cubic_step, multistage_solve, LipschitzStrongOracle, RestartPlan};
use scopt::feasibility::{depth_check, feasibility_via_dual, solve_lp_via_embedding, FeasConfig, FeasSolver, FeasibilityInstance};
use scopt::functions::{BoxBarrier, Quadratic, SimplexBarrier, XMinusLog};
use scopt::linops::{LocalGeometry, SpdMatrix};
use scopt::lp::{enumerate_optimum, random_lp, LpData};
use scopt::newton::{damped_newton_step, dnm_solve, superlinear_bound_check, NewtonConfig};
use scopt::pathfollow::{decrease_check, pfs_solve, pfs_superlinear_check, rate_check, PathConfig};
use scopt::predcorr::pcpfs_solve;
use scopt::scalar::{omega, validate_constants, PathConstants, Variant};
use scopt::zoo::{zoo, ProblemSpec};
use scopt::{Barrier, LocalModel, ScOracle};

/// Criteria that fail for reasons recorded in the notes.
const KNOWN_FAILURES: [usize; 2] = [5, 6];

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome { ok, detail: detail.into() }
}

fn within(v: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&v)
}

fn constants() -> Outcome {
    let start = Instant::now();
    let accepted = [PathConstants::PFS, PathConstants::PCPFS, PathConstants::BARRIER_PC].iter().all(|c| c.validate().ok());
    let rejected = [
        (0.026, 0.2, Variant::Pfs),
        (0.026, 0.114, Variant::Pfs),
        (0.0015, 0.3, Variant::Pcpfs),
        (0.05, 0.158, Variant::Pcpfs),
        (0.06, 0.4, Variant::BarrierPc),
    ]
    .iter()
    .all(|&(b, g, v)| !validate_constants(b, g, v).ok());
    let pfs = PathConstants::PFS.rate_constant();
    let pc = PathConstants::PCPFS.rate_constant();
    let barrier = PathConstants::BARRIER_PC.rate_constant();
    let elapsed = start.elapsed();
    outcome(
        accepted
            && rejected
            && within(pfs, 17.10, 17.15)
            && within(pc, 13.40, 13.50)
            && within(barrier, 3.93, 3.95)
            && elapsed < Duration::from_secs(1),
        format!("PFS {pfs:.4}, PCPFS {pc:.4}, barrier {barrier:.4}, {:.1} ms", elapsed.as_secs_f64() * 1e3),
    )
}

/// Worst violation of each property family over `cases` seeded draws.
fn properties(cases: usize) -> Outcome {
    let start = Instant::now();
    let mut failures: Vec<String> = Vec::new();
    let mut fail = |name: &str, msg: String| failures.push(format!("{name}: {msg}"));
    for case in 0..cases as u64 {
        let mut r = rng(0xACCE_0000 + case);
        let kind = r.gen_range(0..common::SMOOTH.len());
        let n = r.gen_range(1..4);
        let inst = common::smooth_instance(kind, n, case);
        let f = inst.oracle.as_ref();
        let m = f.sc_constant();
        let x = common::interior_point(&inst, &mut r);
        let lam = LocalModel::at(f, &x).unwrap().lambda().unwrap();

        // step contracts
        let next = damped_newton_step(f, &x).unwrap();
        let dec = f.value(&x).unwrap() - f.value(&next).unwrap();
        if dec < scopt::newton::damped_decrease_bound(m, lam).unwrap() - 1e-9 {
            fail("damped decrease", format!("case {case}"));
        }
        let lam_next = LocalModel::at(f, &next).unwrap().lambda().unwrap();
        if lam_next > 2.0 * m * lam * lam + 1e-9 {
            fail("damped quadratic", format!("case {case}"));
        }
        if m * lam < 1.0 {
            let full = scopt::newton::standard_newton_step(f, &x).unwrap();
            let l2 = LocalModel::at(f, &full).unwrap().lambda().unwrap();
            let bound = if m > 0.0 { (m * lam / (1.0 - m * lam)).powi(2) / m } else { 0.0 };
            if l2 > bound + 1e-9 {
                fail("standard quadratic", format!("case {case}"));
            }
        }

        // centering preservation along both path schemes
        for consts in [PathConstants::PFS, PathConstants::PCPFS] {
            let mut pair = scopt::pathfollow::CenteredPair::start(f, &x).unwrap();
            for _ in 0..10 {
                let res = if consts.variant == Variant::Pfs {
                    scopt::pathfollow::pfs_iterate(f, &pair, &consts)
                } else {
                    scopt::predcorr::pcpfs_iterate(f, &pair, &consts)
                };
                match res {
                    Ok(p) => pair = p,
                    Err(e) => {
                        fail("centering", format!("case {case} {:?}: {e}", consts.variant));
                        break;
                    }
                }
            }
        }

        // predictor bound
        if m > 0.0 {
            let x0 = common::interior_point(&inst, &mut r);
            let c = -f.gradient(&x0).unwrap();
            let model = LocalModel::at(f, &x).unwrap();
            let c_norm = model.geometry.dual_norm(&c).unwrap();
            if c_norm > 0.0 {
                let t = r.gen_range(0.0..2.0);
                let tau = r.gen_range(0.0..=0.9) / (m * c_norm);
                let y = &x + model.geometry.solve(&c).unwrap() * tau;
                let l = scopt::pathfollow::centering_residual(f, &c, t, &x).unwrap();
                let measured = scopt::pathfollow::centering_residual(f, &c, t - tau, &y).unwrap();
                if measured > scopt::predcorr::predictor_bound(l, tau, c_norm, m).unwrap() + 1e-9 {
                    fail("predictor bound", format!("case {case}"));
                }
            }
        }

        // oracle inequalities
        let d = scopt::audit::local_direction(f, &x, &mut r).unwrap();
        let len = if m > 0.0 { r.gen_range(0.0..0.97) / m } else { r.gen_range(0.0..3.0) };
        let mut qs = scopt::audit::pair_inequalities(f, &x, &(&x + d * len)).unwrap();
        qs.extend(scopt::audit::optimum_inequalities(f, &x, inst.x_star.as_ref().unwrap(), inst.f_star.unwrap()).unwrap());
        for q in qs.iter().filter(|q| !q.holds_within(1e-8, 1e-10)) {
            fail(q.name, format!("case {case}: {} > {}", q.lhs, q.rhs));
        }

        // barrier inequalities, including the dual local norm
        let nb = r.gen_range(1..5);
        let b: Arc<dyn Barrier> = if r.gen_bool(0.5) { Arc::new(SimplexBarrier { n: nb }) } else { Arc::new(BoxBarrier { n: nb }) };
        let xb = scopt::audit::sample_interior(b.as_ref(), &b.analytic_center().unwrap(), &mut r).unwrap();
        let db = scopt::audit::local_direction(b.as_ref(), &xb, &mut r).unwrap();
        let yb = scopt::audit::boundary_point(b.as_ref(), &xb, &db).unwrap();
        for q in scopt::audit::barrier_inequalities(b.as_ref(), &xb, &yb).unwrap().iter().filter(|q| !q.holds_within(1e-9, 1e-9)) {
            fail(q.name, format!("case {case}"));
        }
        let nd = r.gen_range(2..5);
        let bd: Arc<dyn Barrier> = Arc::new(BoxBarrier { n: nd });
        let c = DVector::from_fn(nd, |_, _| normal(&mut r));
        let bm = DMatrix::from_fn(1, nd, |_, _| normal(&mut r));
        let prob = DualBarrierProblem::new(bd.clone(), bm, c).unwrap();
        let sol = dual_pc_solve(&prob, 1e-3, &BarrierConfig::default()).unwrap();
        if prob.local_norm(&sol.u).unwrap() > bd.nu().sqrt() + 1e-8 {
            fail("dual local norm", format!("case {case}"));
        }
    }
    let elapsed = start.elapsed();
    let n_fail = failures.len();
    let first = failures.first().cloned().unwrap_or_default();
    outcome(
        n_fail == 0 && elapsed < Duration::from_secs(120),
        format!("{cases} cases per family, {n_fail} violations {first}, {:.2} s (full suites in tests/properties.rs)", elapsed.as_secs_f64()),
    )
}

/// Minimizer of `g h + q h^2/2 + m |h|^3 / 6` by a grid scan followed by
/// bisection on the sign of the model derivative.
fn brute_force_cubic(g: f64, q: f64, m: f64) -> f64 {
    let model = |h: f64| g * h + 0.5 * q * h * h + m / 6.0 * h.abs().powi(3);
    let slope = |h: f64| g + q * h + 0.5 * m * h * h.abs();
    let (lo, hi, steps) = (-4.0, 4.0, 80_000);
    let width = (hi - lo) / steps as f64;
    let best = (0..=steps).map(|i| lo + width * i as f64).min_by(|a, b| model(*a).total_cmp(&model(*b))).unwrap();
    let (mut a, mut b) = (best - width, best + width);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if slope(mid) > 0.0 {
            b = mid;
        } else {
            a = mid;
        }
    }
    0.5 * (a + b)
}

fn anchors() -> Outcome {
    let f = XMinusLog { n: 1 };
    let x = DVector::from_element(1, 2.0);
    let next = damped_newton_step(&f, &x).unwrap();
    let dec = f.value(&x).unwrap() - f.value(&next).unwrap();
    let damped_ok = (next[0] - 1.0).abs() <= 1e-12 && (dec - omega(1.0).unwrap()).abs() <= 1e-12;

    let q = Quadratic::new(DMatrix::from_element(1, 1, 1.0), DVector::zeros(1)).unwrap();
    let step = cubic_step(&q, &DVector::from_element(1, 1.0), 6.0, &SpdMatrix::identity(1)).unwrap();
    let reference = 1.0 + brute_force_cubic(1.0, 1.0, 6.0);
    let closed = 1.0 + (1.0 - 13f64.sqrt()) / 6.0;
    let cubic_ok = (step.next[0] - reference).abs() <= 1e-9 && (reference - closed).abs() <= 1e-9;
    outcome(
        damped_ok && cubic_ok,
        format!("damped x+ = {:.15}, decrease error {:.1e}; cubic x+ = {:.12} vs brute force {:.12}", next[0], (dec - omega(1.0).unwrap()).abs(), step.next[0], reference),
    )
}

fn rate_bounds() -> Outcome {
    let mut checked = 0;
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for name in common::SMOOTH {
        for seed in 0..4u64 {
            for scale in [3.0, 30.0] {
                let spec = ProblemSpec { n: 3, m: 8, seed, scale, ..ProblemSpec::named(name) };
                let inst = zoo(&spec).unwrap();
                let f = inst.oracle.as_ref();
                let fs = inst.f_star.unwrap();
                let m = f.sc_constant();
                if m == 0.0 {
                    continue;
                }
                runs += 1;
                let cfg = PathConfig::default();
                let (_, pfs) = pfs_solve(f, &inst.x0, &PathConstants::PFS, &cfg).unwrap();
                let (_, pc) = pcpfs_solve(f, &inst.x0, &PathConstants::PCPFS, &cfg).unwrap();
                let (_, dnm) = dnm_solve(f, &inst.x0, &NewtonConfig::default()).unwrap();
                for check in [rate_check(&pfs, fs), rate_check(&pc, fs), pfs_superlinear_check(&pfs, pfs.f0() - fs), decrease_check(&pfs), decrease_check(&pc)] {
                    checked += check.checked;
                    violations += check.violations;
                    worst = worst.max(check.worst_ratio);
                }
                let s = superlinear_bound_check(&dnm, m, fs);
                checked += s.checked;
                violations += s.violations;
            }
        }
    }
    outcome(violations == 0 && checked > 0, format!("{runs} runs, {checked} iterates checked, {violations} violations, worst bound ratio {worst:.3}"))
}

fn slope_line(res: &ExperimentResult, method: &str, target: f64) -> (bool, String) {
    let s = res.slope(method);
    let ok = s.is_some_and(|v| (v - target).abs() <= 0.15);
    let shown = s.map_or("-".to_string(), |v| format!("{v:.3}"));
    (ok, format!("{method} {shown} (target {target}) {}", if ok { "ok" } else { "off" }))
}

fn scaling() -> Outcome {
    let start = Instant::now();
    let res = run_experiment(&ExperimentSpec::preset("delta-ladder", 0).unwrap()).unwrap();
    let parts = [slope_line(&res, "dnm", 1.0), slope_line(&res, "pfs", 0.5), slope_line(&res, "pcpfs", 0.5), slope_line(&res, "multistage", 0.25)];
    let elapsed = start.elapsed();
    let ok = parts.iter().all(|p| p.0) && res.summary.failed_rows == 0 && elapsed < Duration::from_secs(600);
    let detail: Vec<String> = parts.iter().map(|p| p.1.clone()).collect();
    outcome(ok, format!("{}; {:.1} s", detail.join(", "), elapsed.as_secs_f64()))
}

fn feasibility() -> Outcome {
    let eps = run_experiment(&ExperimentSpec::preset("eps-ladder", 0).unwrap()).unwrap();
    let nu = run_experiment(&ExperimentSpec::preset("nu-ladder", 0).unwrap()).unwrap();
    let pfs = slope_line(&eps, "feas-pfs", 0.5);
    let dual = slope_line(&nu, "dual-path", 0.5);
    let mut depth_ok = true;
    let mut depth_cases = 0;
    for n in [2, 4, 8] {
        for e in [1e-1, 1e-2, 1e-4, 1e-6] {
            let inst = FeasibilityInstance::box_slab(n, e).unwrap();
            let sol = feasibility_via_dual(&inst, FeasSolver::Dnm, &FeasConfig::default()).unwrap();
            depth_ok &= sol.converged() && depth_check(&inst, &sol.x, e).unwrap().ok(1e-6);
            depth_cases += 1;
        }
    }
    outcome(
        pfs.0 && dual.0 && depth_ok,
        format!("{} against ln(1/eps); {} against nu; depth bounds {} at {depth_cases} solutions", pfs.1, dual.1, if depth_ok { "hold" } else { "violated" }),
    )
}

/// `max -<c, x>` over the box `[-1, 1]^n` cut by `B x = 0`, as a standard-form LP
/// in `z = (x + 1)/2` and slacks.
fn box_dual_optimum(b: &DMatrix<f64>, c: &DVector<f64>) -> f64 {
    let (m, n) = b.shape();
    let mut a = DMatrix::zeros(m + n, 2 * n);
    a.view_mut((0, 0), (m, n)).copy_from(&(b * 2.0));
    for i in 0..n {
        a[(m + i, i)] = 1.0;
        a[(m + i, n + i)] = 1.0;
    }
    let mut rhs = DVector::from_element(m + n, 1.0);
    rhs.rows_mut(0, m).copy_from(&(b * DVector::from_element(n, 1.0)));
    let mut cost = DVector::zeros(2 * n);
    cost.rows_mut(0, n).copy_from(&(c * 2.0));
    let opt = enumerate_optimum(&LpData::new(a, rhs, cost).unwrap()).expect("bounded and feasible");
    c.sum() - opt.value
}

fn certificates() -> Outcome {
    let mut cases = 0;
    let mut bad = Vec::new();
    let mut worst_slack = f64::INFINITY;
    for seed in 0..12u64 {
        let mut r = rng(0xCE27 + seed);
        let n = 1 + (seed as usize % 4);
        let c = DVector::from_fn(n, |_, _| normal(&mut r));
        // primal scheme on the box and the simplex, closed-form optima
        for simplex in [false, true] {
            let (b, opt): (Arc<dyn Barrier>, f64) = if simplex {
                (Arc::new(SimplexBarrier { n }), c.min().min(0.0))
            } else {
                (Arc::new(BoxBarrier { n }), -c.abs().sum())
            };
            for eps in [1e-3, 1e-6] {
                let prob = PrimalBarrierProblem::new(b.clone(), c.clone()).unwrap();
                let sol = primal_pc_solve(&prob, eps, &BarrierConfig::default()).unwrap();
                let gap = c.dot(&sol.x) - opt;
                cases += 1;
                worst_slack = worst_slack.min(sol.certificate - gap.abs());
                if gap.abs() > sol.certificate || sol.certificate > eps {
                    bad.push(format!("primal seed {seed} simplex {simplex}: gap {gap:e} cert {:e}", sol.certificate));
                }
            }
        }
        // dual scheme on box LPs, vertex-enumeration optima
        if n >= 2 {
            let rows = 1 + (seed as usize % (n - 1));
            let bm = DMatrix::from_fn(rows, n, |_, _| normal(&mut r));
            let alpha_star = box_dual_optimum(&bm, &c);
            for eps in [1e-3, 1e-6] {
                let bar: Arc<dyn Barrier> = Arc::new(BoxBarrier { n });
                let prob = DualBarrierProblem::new(bar.clone(), bm.clone(), c.clone()).unwrap();
                let sol = dual_pc_solve(&prob, eps, &BarrierConfig::default()).unwrap();
                let gap = alpha_star - (-c.dot(&sol.x));
                let xu = prob.primal_point(&sol.u).unwrap();
                let geo = LocalGeometry::from_matrix(bar.evaluate(&xu).unwrap().hessian).unwrap();
                let dist = geo.primal_norm(&(&sol.x - &xu)).unwrap();
                let infeas = (&bm * &sol.x).amax().max((-c.dot(&sol.x) - sol.alpha).abs());
                cases += 1;
                worst_slack = worst_slack.min(sol.certificate - gap.abs());
                if gap.abs() > sol.certificate || dist > prob.consts.beta || infeas > 1e-10 {
                    bad.push(format!("dual seed {seed}: gap {gap:e} cert {:e} dist {dist:.3} infeas {infeas:.1e}", sol.certificate));
                }
            }
        }
    }
    outcome(bad.is_empty(), format!("{cases} solves, smallest certificate slack {worst_slack:.2e}{}", bad.first().map(|s| format!("; {s}")).unwrap_or_default()))
}

fn embedding() -> Outcome {
    let mut r = rng(0x1B);
    let mut worst_gap: f64 = 0.0;
    let mut worst_ref: f64 = 0.0;
    let mut ok = true;
    for _ in 0..20 {
        let n = r.gen_range(2..=10);
        let m = r.gen_range(1..n);
        let lp = random_lp(n, m, &mut r).unwrap();
        let sol = solve_lp_via_embedding(&lp, 1e-10, 100_000).unwrap();
        let reference = enumerate_optimum(&lp).unwrap().value;
        let p = &sol.polished;
        let ref_err = (p.primal_value - reference).abs() / (1.0 + reference.abs());
        worst_gap = worst_gap.max(p.gap.abs());
        worst_ref = worst_ref.max(ref_err);
        ok &= p.gap.abs() <= 1e-6 && ref_err <= 1e-6;
    }
    outcome(ok, format!("20 LPs, worst duality gap {worst_gap:.1e}, worst distance to vertex optimum {worst_ref:.1e}"))
}

fn multistage() -> Outcome {
    let calib = calibrate_on(&ProblemSpec { n: 5, m: 10, mu: 0.1, sigma: 1.0, ..ProblemSpec::named("lse") }).unwrap();
    let mut ok = true;
    let mut runs = 0;
    let mut worst_stage = f64::NEG_INFINITY;
    let mut worst_iter = f64::NEG_INFINITY;
    for (name, sigma) in [("lse", 1.0), ("lse", 0.3), ("logistic", 0.5)] {
        for seed in 0..3u64 {
            for scale in [1.0, 4.0, 16.0, 64.0] {
                let spec = ProblemSpec { n: 4, m: 10, seed, scale, sigma, mu: 0.1, ..ProblemSpec::named(name) };
                let inst = zoo(&spec).unwrap();
                let (s, h) = inst.lipschitz.unwrap();
                let fs = inst.f_star.unwrap();
                let lso = LipschitzStrongOracle::new(inst.oracle.clone(), s, h).unwrap();
                let rep = multistage_solve(&lso, &inst.x0, calib, fs, Some(fs)).unwrap();
                let delta = lso.m_f().powi(2) * (lso.value(&inst.x0).unwrap() - fs);
                let stage_bound = RestartPlan::stage_bound(delta);
                let iter_bound = rep.plan.iteration_bound(delta);
                runs += 1;
                worst_stage = worst_stage.max(rep.stages.len() as f64 - stage_bound.max(0.0));
                worst_iter = worst_iter.max(rep.total_iterations as f64 - iter_bound.max(0.0));
                ok &= rep.halving_holds(fs) && rep.stages.len() as f64 <= stage_bound.max(0.0) && rep.total_iterations as f64 <= iter_bound.max(0.0);
            }
        }
    }
    outcome(ok, format!("{runs} runs with c = {calib:.4}; worst stages minus bound {worst_stage:.2}, worst iterations minus bound {worst_iter:.1}"))
}

fn parameter_search() -> Outcome {
    let start = Instant::now();
    let (betas, gammas) = default_grids(400);
    let res = param_search(&betas, &gammas).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("paramsearch.csv");
    std::fs::write(&path, res.to_csv().unwrap()).unwrap();
    let lines = std::fs::read_to_string(&path).unwrap().lines().count();
    let elapsed = start.elapsed();
    let best = res.argmax.unwrap();
    let reference = ParamNode::at(0.026, 0.1125);
    let ok = reference.feasible
        && best.feasible
        && (best.objective - 0.0068063).abs() <= 0.02 * 0.0068063
        && res.feasible_region_connected()
        && lines == 400 * 400 + 1
        && elapsed < Duration::from_secs(30);
    outcome(
        ok,
        format!(
            "argmax ({:.5}, {:.5}) objective {:.7}, reference pair objective {:.7}, {} CSV rows, {:.2} s",
            best.beta,
            best.gamma,
            best.objective,
            reference.objective,
            lines - 1,
            elapsed.as_secs_f64()
        ),
    )
}

fn main() {
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "constants reproduction", constants),
        (2, "property suites", || properties(200)),
        (3, "exact one-dimensional anchors", anchors),
        (4, "rate bounds on known optima", rate_bounds),
        (5, "scaling exponents on the delta ladder", scaling),
        (6, "feasibility strategy comparison", feasibility),
        (7, "certificates bound the true gap", certificates),
        (8, "self-dual embedding round trip", embedding),
        (9, "multistage accounting", multistage),
        (10, "parameter search", parameter_search),
    ];
    let mut unexpected = Vec::new();
    let mut passed = 0;
    for (id, name, run) in criteria {
        let o = run();
        println!("{} criterion {id:>2} {name}: {}", if o.ok { "PASS" } else { "FAIL" }, o.detail);
        if o.ok {
            passed += 1;
        } else if !KNOWN_FAILURES.contains(&id) {
            unexpected.push(id);
        }
    }
    println!("acceptance: {passed}/10 criteria pass");
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

mod common;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

use common::{interior_point, normal, rng, smooth_instance};
use scopt::audit::{barrier_inequalities, boundary_point, local_direction, optimum_inequalities, pair_inequalities};
use scopt::barrier::{dual_pc_iterate, primal_pc_iterate, DualBarrierProblem, PrimalBarrierProblem};
use scopt::cubic::{cubic_step, LipschitzStrongOracle, RestartPlan};
use scopt::feasibility::{conjugate_curvature, FeasibilityInstance};
use scopt::functions::{BoxBarrier, SimplexBarrier};
use scopt::linops::{LocalGeometry, SpdMatrix};
use scopt::newton::{damped_decrease_bound, damped_newton_step, standard_newton_step};
use scopt::pathfollow::{centering_residual, pfs_iterate, CenteredPair};
use scopt::predcorr::{pcpfs_iterate, predictor_bound};
use scopt::scalar::{omega, omega_prime, omega_star, omega_star_inverse, omega_star_prime, PathConstants};
use scopt::zoo::{zoo, ProblemSpec};
use scopt::{Barrier, LocalModel, ScOracle};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

fn lambda(oracle: &dyn ScOracle, x: &DVector<f64>) -> f64 {
    LocalModel::at(oracle, x).unwrap().lambda().unwrap()
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn derivative_maps_are_inverse(e in -8.0f64..4.0) {
        let tau = 10f64.powf(e);
        let back = omega_star_prime(omega_prime(tau).unwrap()).unwrap();
        prop_assert!((back - tau).abs() <= 1e-10 * tau.max(1.0));
    }

    #[test]
    fn lower_model_below_upper_model(tau in 0.0f64..0.999_999) {
        prop_assert!(omega(tau).unwrap() <= omega_star(tau).unwrap());
    }

    #[test]
    fn omega_star_inverse_round_trip(tau in 0.0f64..=0.99) {
        let back = omega_star_inverse(omega_star(tau).unwrap()).unwrap();
        prop_assert!((back - tau).abs() <= 1e-10);
    }

    #[test]
    fn dual_norm_matches_solve(n in 1usize..8, seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = DMatrix::from_fn(n, n, |_, _| normal(&mut r));
        let h = &g * g.transpose() + DMatrix::identity(n, n) * 0.1;
        let s = DVector::from_fn(n, |_, _| normal(&mut r));
        let geo = LocalGeometry::new(SpdMatrix::new(h).unwrap()).unwrap();
        let lhs = geo.dual_norm(&s).unwrap().powi(2);
        let rhs = s.dot(&geo.solve(&s).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1e-300));
    }

    #[test]
    fn damped_step_contracts(kind in 0usize..7, n in 1usize..5, seed in any::<u64>()) {
        let inst = smooth_instance(kind, n, seed);
        let f = inst.oracle.as_ref();
        let m = f.sc_constant();
        let x = interior_point(&inst, &mut rng(seed));
        let lam = lambda(f, &x);
        let fx = f.value(&x).unwrap();
        let next = damped_newton_step(f, &x).unwrap();
        prop_assert!(f.in_domain(&next));
        let decrease = fx - f.value(&next).unwrap();
        prop_assert!(decrease >= damped_decrease_bound(m, lam).unwrap() - 1e-9, "decrease {decrease}, lambda {lam}");
        let lam_next = lambda(f, &next);
        prop_assert!(lam_next <= 2.0 * m * lam * lam + 1e-9, "lambda {lam} -> {lam_next}");
    }

    #[test]
    fn standard_step_contracts(kind in 0usize..7, n in 1usize..5, seed in any::<u64>(), shrink in 0.0f64..1.0) {
        let inst = smooth_instance(kind, n, seed);
        let f = inst.oracle.as_ref();
        let m = f.sc_constant();
        // pull the sample towards the minimizer so that M lambda < 1 is common
        let mut x = interior_point(&inst, &mut rng(seed));
        if let Some(xs) = &inst.x_star {
            x = xs + (&x - xs) * shrink;
        }
        let lam = lambda(f, &x);
        prop_assume!(m * lam < 1.0);
        let next = standard_newton_step(f, &x).unwrap();
        let lam_next = lambda(f, &next);
        let bound = if m > 0.0 { (m * lam / (1.0 - m * lam)).powi(2) / m } else { 0.0 };
        prop_assert!(lam_next <= bound + 1e-9, "lambda {lam} -> {lam_next} > {bound}");
    }

    #[test]
    fn pair_inequalities_hold(kind in 0usize..7, n in 1usize..5, seed in any::<u64>(), reach in 0.0f64..0.97) {
        let inst = smooth_instance(kind, n, seed);
        let f = inst.oracle.as_ref();
        let m = f.sc_constant();
        let mut r = rng(seed ^ 0x5a5a);
        let x = interior_point(&inst, &mut r);
        let d = local_direction(f, &x, &mut r).unwrap();
        let len = if m > 0.0 { reach / m } else { 3.0 * reach };
        let y = &x + d * len;
        for q in pair_inequalities(f, &x, &y).unwrap() {
            prop_assert!(q.holds_within(1e-8, 1e-10), "{} {} > {}", q.name, q.lhs, q.rhs);
        }
    }

    #[test]
    fn optimum_inequalities_hold(kind in 0usize..7, n in 1usize..5, seed in any::<u64>()) {
        let inst = smooth_instance(kind, n, seed);
        let f = inst.oracle.as_ref();
        let x = interior_point(&inst, &mut rng(seed));
        let (xs, fs) = (inst.x_star.clone().unwrap(), inst.f_star.unwrap());
        for q in optimum_inequalities(f, &x, &xs, fs).unwrap() {
            prop_assert!(q.holds_within(1e-8, 1e-10), "{} {} > {}", q.name, q.lhs, q.rhs);
        }
    }

    #[test]
    fn barrier_inequalities_hold(simplex in any::<bool>(), n in 1usize..6, seed in any::<u64>(), to_boundary in any::<bool>()) {
        let b: Arc<dyn Barrier> = if simplex { Arc::new(SimplexBarrier { n }) } else { Arc::new(BoxBarrier { n }) };
        let mut r = rng(seed);
        let center = b.analytic_center().unwrap();
        let x = scopt::audit::sample_interior(b.as_ref(), &center, &mut r).unwrap();
        let d = local_direction(b.as_ref(), &x, &mut r).unwrap();
        let y = if to_boundary { boundary_point(b.as_ref(), &x, &d).unwrap() } else { &x + d * r.gen_range(0.0..0.99) };
        for q in barrier_inequalities(b.as_ref(), &x, &y).unwrap() {
            prop_assert!(q.holds_within(1e-9, 1e-9), "{} {} > {}", q.name, q.lhs, q.rhs);
        }
    }

    #[test]
    fn dual_curvature_bounded_by_nu(n in 1usize..6, eps in 0.001f64..0.5, seed in any::<u64>()) {
        let inst = FeasibilityInstance::box_slab(n, eps).unwrap();
        let mut r = rng(seed);
        let y = DVector::from_fn(inst.a.nrows(), |_, _| 10.0 * normal(&mut r));
        let curvature = conjugate_curvature(&inst, &y).unwrap();
        prop_assert!(curvature <= inst.nu() * (1.0 + 1e-8), "{curvature} > {}", inst.nu());
    }

    #[test]
    fn cubic_secular_equation_solved(n in 1usize..6, seed in any::<u64>(), m_exp in -2.0f64..3.0) {
        let inst = zoo(&ProblemSpec { n, m: 2 * n + 2, seed, scale: 5.0, ..ProblemSpec::named("lse") }).unwrap();
        let x = interior_point(&inst, &mut rng(seed));
        let step = cubic_step(inst.oracle.as_ref(), &x, 10f64.powf(m_exp), &SpdMatrix::identity(n)).unwrap();
        prop_assert!(step.secular_residual <= 1e-10 * (1.0 + step.r), "residual {} at r {}", step.secular_residual, step.r);
        prop_assert!(step.model_decrease >= 0.0);
    }

    #[test]
    fn cubic_model_is_upper_bound(kind in 0usize..2, n in 1usize..5, seed in any::<u64>(), len in 0.0f64..5.0) {
        let name = ["lse", "logistic"][kind];
        let inst = zoo(&ProblemSpec { n, m: 2 * n + 2, seed, ..ProblemSpec::named(name) }).unwrap();
        let (sigma, h_f) = inst.lipschitz.unwrap();
        let lso = LipschitzStrongOracle::new(inst.oracle.clone(), sigma, h_f).unwrap();
        let mut r = rng(seed);
        let x = interior_point(&inst, &mut r);
        let d = DVector::from_fn(n, |_, _| normal(&mut r)).normalize() * len;
        let e = lso.evaluate(&x).unwrap();
        let model = e.value + e.gradient.dot(&d) + 0.5 * d.dot(&(&e.hessian * &d)) + h_f / 6.0 * lso.metric_norm(&d).powi(3);
        let fy = lso.value(&(&x + &d)).unwrap();
        prop_assert!(fy <= model + 1e-10 * (1.0 + fy.abs()), "f(y) {fy} > model {model}");
    }

    #[test]
    fn stage_lengths_decay_no_faster_than_rate(k_p in 1usize..5000, p_index in 0usize..3) {
        let p = [2.0, 3.0, 3.5][p_index];
        let plan = RestartPlan::with_kp(p, k_p, 0.125);
        for w in plan.stage_lengths.windows(2) {
            prop_assert!(w[1] <= w[0] && w[1] > 0);
        }
        for (k, t) in plan.stage_lengths.iter().enumerate().skip(1) {
            // t_{k+1}^p >= (1/2)^{k/2} k_p^p with zero-based k here
            let lhs = (*t as f64).powf(p);
            let rhs = 0.5f64.powf(k as f64 / 2.0) * (k_p as f64).powf(p);
            prop_assert!(lhs >= rhs * (1.0 - 1e-12), "stage {}: {lhs} < {rhs}", k + 1);
        }
    }
}

proptest! {
    #![proptest_config(config(500))]

    #[test]
    fn plain_path_keeps_centering(kind in 0usize..7, n in 1usize..4, seed in any::<u64>(), steps in 1usize..25) {
        let inst = smooth_instance(kind, n, seed);
        let f = inst.oracle.as_ref();
        let consts = PathConstants::PFS;
        let x0 = interior_point(&inst, &mut rng(seed));
        let mut pair = CenteredPair::start(f, &x0).unwrap();
        prop_assume!(pair.c.amax() > 0.0);
        let bound = consts.beta / f.sc_constant().max(1e-300);
        for _ in 0..steps {
            let t = pair.t;
            pair = pfs_iterate(f, &pair, &consts).unwrap();
            prop_assert!(pair.residual <= bound * (1.0 + 1e-9) + 1e-13);
            prop_assert!(pair.t <= t && pair.t >= 0.0);
        }
    }

    #[test]
    fn predictor_corrector_keeps_centering(kind in 0usize..7, n in 1usize..4, seed in any::<u64>(), steps in 1usize..25) {
        let inst = smooth_instance(kind, n, seed);
        let f = inst.oracle.as_ref();
        let consts = PathConstants::PCPFS;
        let x0 = interior_point(&inst, &mut rng(seed));
        let mut pair = CenteredPair::start(f, &x0).unwrap();
        prop_assume!(pair.c.amax() > 0.0);
        let bound = consts.beta / f.sc_constant().max(1e-300);
        for _ in 0..steps {
            pair = pcpfs_iterate(f, &pair, &consts).unwrap();
            prop_assert!(pair.residual <= bound * (1.0 + 1e-9) + 1e-13);
        }
    }

    #[test]
    fn predictor_bound_holds(kind in 0usize..7, n in 1usize..4, seed in any::<u64>(), t in 0.0f64..2.0, q in 0.0f64..=0.9) {
        let inst = smooth_instance(kind, n, seed);
        let f = inst.oracle.as_ref();
        let m = f.sc_constant();
        prop_assume!(m > 0.0);
        let mut r = rng(seed);
        let x0 = interior_point(&inst, &mut r);
        let x = interior_point(&inst, &mut r);
        let c = -f.gradient(&x0).unwrap();
        let model = LocalModel::at(f, &x).unwrap();
        let c_norm = model.geometry.dual_norm(&c).unwrap();
        prop_assume!(c_norm > 0.0);
        let tau = q / (m * c_norm);
        let y = &x + model.geometry.solve(&c).unwrap() * tau;
        let lam = centering_residual(f, &c, t, &x).unwrap();
        let measured = centering_residual(f, &c, t - tau, &y).unwrap();
        let bound = predictor_bound(lam, tau, c_norm, m).unwrap();
        prop_assert!(measured <= bound + 1e-9, "measured {measured} > bound {bound}");
    }
}

proptest! {
    #![proptest_config(config(200))]

    #[test]
    fn primal_barrier_keeps_centering(simplex in any::<bool>(), n in 1usize..5, seed in any::<u64>(), steps in 1usize..20) {
        let b: Arc<dyn Barrier> = if simplex { Arc::new(SimplexBarrier { n }) } else { Arc::new(BoxBarrier { n }) };
        let mut r = rng(seed);
        let c = DVector::from_fn(n, |_, _| normal(&mut r));
        let prob = PrimalBarrierProblem::new(b.clone(), c).unwrap();
        let mut x = b.analytic_center().unwrap();
        let mut t = 0.0;
        for _ in 0..steps {
            let (t_next, x_next) = primal_pc_iterate(&prob, t, &x).unwrap();
            prop_assert!(t_next > t);
            prop_assert!(prob.residual(t_next, &x_next).unwrap() <= prob.consts.beta * (1.0 + 1e-9) + 1e-13);
            t = t_next;
            x = x_next;
        }
    }

    #[test]
    fn dual_barrier_keeps_centering(n in 2usize..5, seed in any::<u64>(), steps in 1usize..20) {
        let b: Arc<dyn Barrier> = Arc::new(BoxBarrier { n });
        let mut r = rng(seed);
        let c = DVector::from_fn(n, |_, _| normal(&mut r));
        let bm = DMatrix::from_fn(1, n, |_, _| normal(&mut r));
        let prob = DualBarrierProblem::new(b.clone(), bm, c).unwrap();
        let nu = b.nu();
        let mut u = DVector::zeros(prob.dual_dim());
        let mut sigma = 0.0;
        for _ in 0..steps {
            let (s, next) = dual_pc_iterate(&prob, sigma, &u).unwrap();
            prop_assert!(s > sigma);
            prop_assert!(prob.point(&next).unwrap().lambda <= prob.consts.beta * (1.0 + 1e-9) + 1e-13);
            prop_assert!(prob.local_norm(&next).unwrap() <= nu.sqrt() + 1e-8);
            sigma = s;
            u = next;
        }
    }
}

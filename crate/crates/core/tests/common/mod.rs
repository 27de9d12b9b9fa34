#![allow(dead_code)]

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scopt::audit::sample_interior;
use scopt::zoo::{zoo, ProblemInstance, ProblemSpec};

/// Smooth zoo instances with a finite minimizer.
pub const SMOOTH: [&str; 7] = ["scalar-xlnx", "xlnx", "box-barrier", "simplex-barrier", "lse", "logistic", "quadratic"];

pub fn smooth_instance(kind: usize, n: usize, seed: u64) -> ProblemInstance {
    let name = SMOOTH[kind % SMOOTH.len()];
    let spec = ProblemSpec { n, m: 2 * n + 2, seed, scale: 3.0, ..ProblemSpec::named(name) };
    zoo(&spec).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn interior_point(inst: &ProblemInstance, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let from = if rand::Rng::gen_bool(rng, 0.5) { inst.x0.clone() } else { inst.x_star.clone().unwrap_or_else(|| inst.x0.clone()) };
    sample_interior(inst.oracle.as_ref(), &from, rng).expect("interior sample")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
}

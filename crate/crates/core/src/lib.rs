//! Newton-type and path-following methods for self-concordant minimization.
//!
//! The crate covers the damped Newton method, path-following schemes that
//! track the minimizers of `f(x) - t <f'(x_0), x>` as `t` goes from 1 to 0
//! (plain and predictor-corrector, fixed and adaptive step), primal and dual
//! barrier path-following, feasibility problems solved through the dual,
//! and cubic-regularized Newton with restarts.

pub mod audit;
pub mod barrier;
pub mod bench;
pub mod cubic;
pub mod error;
pub mod feasibility;
pub mod functions;
pub mod linops;
pub mod lp;
pub mod newton;
pub mod pathfollow;
pub mod predcorr;
pub mod oracle;
pub mod scalar;
pub mod trace;
pub mod zoo;

pub use error::{Error, Result};
pub use oracle::{Barrier, Evaluation, LocalModel, Matrix, ScOracle, Vector};

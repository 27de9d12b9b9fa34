//! Per-iteration records shared by all solvers.

use std::time::{Duration, Instant};

use serde::Serialize;

/// Kind of step taken from an iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Damped,
    Standard,
    /// Damped step taken because the standard step left the domain.
    DampedFallback,
    /// Path-following update of `t` followed by a Newton correction.
    Path,
    /// Predictor along the path tangent followed by a Newton corrector.
    PredictorCorrector,
    Cubic,
    /// No step; the iterate is final.
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Converged,
    MaxIterations,
    TimeLimit,
    /// Finishing steps stopped reducing the Newton decrement.
    Stalled,
}

/// State at iterate `k` and the step taken from it.
#[derive(Debug, Clone, Serialize)]
pub struct IterRecord {
    pub iter: usize,
    /// Newton decrement of the objective at `x_k`.
    pub lambda: f64,
    pub value: f64,
    /// `||x_{k+1} - x_k||_{x_k}`; zero on the final record.
    pub step_norm: f64,
    pub t: Option<f64>,
    /// Centering residual `||f'(x_k) - t_k f'(x_0)||*_{x_k}`.
    pub residual: Option<f64>,
    /// `||f'(x_0)||*_{x_k}`.
    pub c_norm: Option<f64>,
    pub stage: Stage,
    pub restart: Option<u32>,
    /// Trial steps spent on this iteration by the adaptive schemes.
    pub tries: Option<u32>,
    pub gamma: Option<f64>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl IterRecord {
    pub fn new(iter: usize, lambda: f64, value: f64, stage: Stage) -> Self {
        IterRecord {
            iter,
            lambda,
            value,
            step_norm: 0.0,
            t: None,
            residual: None,
            c_norm: None,
            stage,
            restart: None,
            tries: None,
            gamma: None,
            elapsed: Duration::ZERO,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveTrace {
    pub records: Vec<IterRecord>,
    pub status: Status,
    /// First iterate in the region of quadratic convergence.
    pub region_entry: Option<usize>,
    pub flags: Vec<String>,
}

impl SolveTrace {
    pub fn new() -> Self {
        SolveTrace { records: Vec::new(), status: Status::MaxIterations, region_entry: None, flags: Vec::new() }
    }

    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.value).collect()
    }

    pub fn flag(&mut self, note: impl Into<String>) {
        let note = note.into();
        if !self.flags.contains(&note) {
            self.flags.push(note);
        }
    }
}

impl Default for SolveTrace {
    fn default() -> Self {
        Self::new()
    }
}

/// Wall-clock budget checked once per iteration.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Clock {
    start: Instant,
    limit: Option<Duration>,
}

impl Clock {
    pub fn start(limit: Option<Duration>) -> Self {
        Clock { start: Instant::now(), limit }
    }

    pub fn elapsed(&self) -> Duration {
        self.start.elapsed()
    }

    pub fn expired(&self) -> bool {
        self.limit.is_some_and(|l| self.start.elapsed() > l)
    }
}

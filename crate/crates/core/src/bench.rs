//! Experiment runner, scaling fits and the `(beta, gamma)` parameter search.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cubic::{calibrate_rate_constant, crnm_solve, multistage_solve, CubicConfig, LipschitzStrongOracle};
use crate::error::{Error, Result};
use crate::feasibility::{dual_pathfollow_exact, feasibility_via_dual, solve_lp_via_embedding, FeasConfig, FeasSolver};
use crate::newton::{dnm_solve, NewtonConfig};
use crate::pathfollow::{adaptive_pfs_solve, pfs_solve, PathConfig, PathReport};
use crate::predcorr::{adaptive_pcpfs_solve, pcpfs_solve};
use crate::scalar::{omega_star, PathConstants, Variant};
use crate::trace::{SolveTrace, Status};
use crate::zoo::{zoo, ProblemInstance, ProblemSpec};
use crate::Vector;

/// Version of the experiment CSV column set.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const CSV_COLUMNS: [&str; 15] = [
    "instance",
    "seed",
    "method",
    "sweep",
    "sweep_value",
    "delta",
    "nu",
    "eps",
    "iterations_to_region",
    "total_iterations",
    "final_lambda",
    "certificate",
    "gap",
    "wall_time_s",
    "status",
];

pub const METHODS: [&str; 11] = [
    "dnm",
    "pfs",
    "pcpfs",
    "apfs",
    "apcpfs",
    "crnm",
    "multistage",
    "feas-dnm",
    "feas-pfs",
    "dual-path",
    "lp-embedding",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

impl MethodSpec {
    pub fn named(id: &str) -> Self {
        MethodSpec { id: id.into(), beta: None, gamma: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    /// Single run at the base parameters.
    None,
    /// Start-point distance, giving a ladder in `Delta(x_0)`.
    Scale,
    /// Feasibility depth.
    Eps,
    /// Barrier parameter of the box (`nu = 2n`).
    Nu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub kind: SweepKind,
    #[serde(default)]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub seed: u64,
    pub instances: Vec<ProblemSpec>,
    pub methods: Vec<MethodSpec>,
    pub sweep: Sweep,
    #[serde(default = "default_time_limit")]
    pub time_limit_s: f64,
    /// Fills the wall-time column, which makes reruns differ.
    #[serde(default)]
    pub record_time: bool,
    /// Rate constant of the cubic method for the restart scheme; calibrated
    /// on the base instance when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cubic_constant: Option<f64>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
}

fn default_time_limit() -> f64 {
    60.0
}

fn default_max_iters() -> usize {
    2_000_000
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::InvalidArgument(format!("experiment file: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        for m in &self.methods {
            if !METHODS.contains(&m.id.as_str()) {
                return Err(Error::InvalidArgument(format!("unknown method `{}`", m.id)));
            }
        }
        if self.sweep.kind == SweepKind::Eps && self.sweep.values.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::InvalidArgument("eps values must lie in (0, 1)".into()));
        }
        if !(self.time_limit_s > 0.0) {
            return Err(Error::InvalidArgument("time limit must be positive".into()));
        }
        Ok(())
    }

    /// Lse ladder in `Delta(x_0)` run by the four unconstrained methods.
    pub fn delta_ladder(seed: u64) -> Self {
        let base = ProblemSpec { n: 5, m: 10, mu: 0.1, sigma: 1.0, ..ProblemSpec::named("lse") };
        ExperimentSpec {
            name: "delta-ladder".into(),
            seed,
            instances: vec![base],
            methods: ["dnm", "pfs", "pcpfs", "multistage"].iter().map(|m| MethodSpec::named(m)).collect(),
            sweep: Sweep { kind: SweepKind::Scale, values: (0..8).map(|k| 2f64.powi(k)).collect() },
            time_limit_s: default_time_limit(),
            record_time: false,
            cubic_constant: None,
            max_iters: default_max_iters(),
        }
    }

    /// Box-slab ladder in the depth at `nu = 8`.
    pub fn eps_ladder(seed: u64) -> Self {
        let base = ProblemSpec { n: 4, ..ProblemSpec::named("box-feasibility") };
        ExperimentSpec {
            name: "eps-ladder".into(),
            seed,
            instances: vec![base],
            methods: ["feas-dnm", "feas-pfs", "dual-path"].iter().map(|m| MethodSpec::named(m)).collect(),
            sweep: Sweep { kind: SweepKind::Eps, values: (1..=8).map(|k| 10f64.powi(-k)).collect() },
            time_limit_s: default_time_limit(),
            record_time: false,
            cubic_constant: None,
            max_iters: default_max_iters(),
        }
    }

    /// Box-slab ladder in `nu` at depth `0.01`.
    pub fn nu_ladder(seed: u64) -> Self {
        let base = ProblemSpec { eps: 0.01, ..ProblemSpec::named("box-feasibility") };
        ExperimentSpec {
            name: "nu-ladder".into(),
            seed,
            instances: vec![base],
            methods: vec![MethodSpec::named("dual-path")],
            sweep: Sweep { kind: SweepKind::Nu, values: (1..=8).map(|k| 2f64.powi(k)).collect() },
            time_limit_s: default_time_limit(),
            record_time: false,
            cubic_constant: None,
            max_iters: default_max_iters(),
        }
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "delta-ladder" => Ok(Self::delta_ladder(seed)),
            "eps-ladder" => Ok(Self::eps_ladder(seed)),
            "nu-ladder" => Ok(Self::nu_ladder(seed)),
            _ => Err(Error::InvalidArgument(format!("unknown experiment preset `{name}`"))),
        }
    }
}

/// Measurements of one (instance, method, sweep point).
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRow {
    pub instance: String,
    pub seed: u64,
    pub method: String,
    pub sweep: SweepKind,
    pub sweep_value: Option<f64>,
    pub delta: Option<f64>,
    pub nu: Option<f64>,
    pub eps: Option<f64>,
    pub iterations_to_region: Option<usize>,
    pub total_iterations: Option<usize>,
    pub final_lambda: Option<f64>,
    pub certificate: Option<f64>,
    pub gap: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub status: String,
}

impl ExperimentRow {
    /// The count used in scaling fits.
    pub fn fitted_count(&self) -> Option<usize> {
        self.iterations_to_region.or(self.total_iterations)
    }

    fn csv_fields(&self) -> Vec<String> {
        fn opt<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map(ToString::to_string).unwrap_or_default()
        }
        let sweep = serde_json::to_value(self.sweep).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        vec![
            self.instance.clone(),
            self.seed.to_string(),
            self.method.clone(),
            sweep,
            opt(&self.sweep_value),
            opt(&self.delta),
            opt(&self.nu),
            opt(&self.eps),
            opt(&self.iterations_to_region),
            opt(&self.total_iterations),
            opt(&self.final_lambda),
            opt(&self.certificate),
            opt(&self.gap),
            opt(&self.wall_time_s),
            self.status.clone(),
        ]
    }
}

/// Least-squares slope of `ln count` against `ln x` over one ladder.
#[derive(Debug, Clone, Serialize)]
pub struct SlopeFit {
    pub instance: String,
    pub method: String,
    /// Abscissa of the fit: `delta`, `ln(1/eps)` or `nu`.
    pub against: String,
    pub points: usize,
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub seed: u64,
    pub csv_schema: u32,
    pub cubic_constant: Option<f64>,
    pub rows: usize,
    pub failed_rows: usize,
    pub slopes: Vec<SlopeFit>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rows: Vec<ExperimentRow>,
    pub summary: ExperimentSummary,
}

impl ExperimentResult {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        w.write_record(CSV_COLUMNS).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.csv_fields()).map_err(io)?;
        }
        w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))
    }

    /// Writes `<dir>/<name>.csv` and `<dir>/<name>.json`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{}.csv", self.summary.name));
        let json_path = dir.join(format!("{}.json", self.summary.name));
        std::fs::write(&csv_path, self.to_csv()?)?;
        let json = serde_json::to_string_pretty(&self.summary).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        std::fs::write(&json_path, json + "\n")?;
        Ok((csv_path, json_path))
    }

    pub fn slope(&self, method: &str) -> Option<f64> {
        self.summary.slopes.iter().find(|s| s.method == method).and_then(|s| s.slope)
    }
}

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Log-log slope after discarding the point with the smallest abscissa.
pub fn ladder_slope(points: &[(f64, f64)]) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = points.iter().copied().filter(|(x, y)| *x > 0.0 && *y > 0.0).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.len() < 3 {
        return None;
    }
    let tail = &pts[1..];
    let xs: Vec<f64> = tail.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = tail.iter().map(|p| p.1.ln()).collect();
    least_squares_slope(&xs, &ys)
}

/// Result of one method on one instance.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub to_region: Option<usize>,
    pub total: usize,
    pub final_lambda: Option<f64>,
    pub certificate: Option<f64>,
    /// `f(x) - f*`, or the constraint residual for feasibility methods and
    /// the duality gap for LPs.
    pub gap: Option<f64>,
    pub status: String,
    pub x: Vector,
    pub trace: Option<SolveTrace>,
}

fn status_word(trace: &SolveTrace) -> String {
    match trace.status {
        Status::Converged => "ok",
        Status::MaxIterations => "max-iterations",
        Status::TimeLimit => "timeout",
        Status::Stalled => "stalled",
    }
    .into()
}

fn constants_for(method: &MethodSpec, variant: Variant) -> PathConstants {
    let d = PathConstants::default_for(variant);
    PathConstants::new(method.beta.unwrap_or(d.beta), method.gamma.unwrap_or(d.gamma), variant)
}

fn path_outcome(inst: &ProblemInstance, x: &Vector, report: &PathReport) -> Result<MethodOutcome> {
    let gap = match inst.f_star {
        Some(fs) => Some(inst.oracle.value(x)? - fs),
        None => None,
    };
    Ok(MethodOutcome {
        to_region: Some(report.path_iterations),
        total: report.trace.iterations(),
        final_lambda: report.trace.records.last().map(|r| r.lambda),
        certificate: None,
        gap,
        status: status_word(&report.trace),
        x: x.clone(),
        trace: Some(report.trace.clone()),
    })
}

fn lipschitz_oracle(inst: &ProblemInstance) -> Result<LipschitzStrongOracle> {
    let (sigma, h) = inst
        .lipschitz
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no declared (sigma_f, H_f)", inst.spec.name)))?;
    LipschitzStrongOracle::new(inst.oracle.clone(), sigma, h)
}

pub fn run_method(
    inst: &ProblemInstance,
    method: &MethodSpec,
    limit: Duration,
    max_iters: usize,
    cubic_c: Option<f64>,
) -> Result<MethodOutcome> {
    let oracle = inst.oracle.as_ref();
    let path_cfg = PathConfig { max_iters, time_limit: Some(limit), initial_gamma: method.gamma, ..PathConfig::default() };
    let mut feas_cfg = FeasConfig { max_iters, time_limit: Some(limit), ..FeasConfig::default() };
    if inst.spec.name == "simplex-feasibility" {
        feas_cfg.gradient_tol = None;
    }
    let feasibility = || {
        inst.feasibility
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("{} is not a feasibility instance", inst.spec.name)))
    };
    match method.id.as_str() {
        "dnm" => {
            let cfg = NewtonConfig { max_iters, time_limit: Some(limit), ..NewtonConfig::default() };
            let (x, trace) = dnm_solve(oracle, &inst.x0, &cfg)?;
            let gap = match inst.f_star {
                Some(fs) => Some(oracle.value(&x)? - fs),
                None => None,
            };
            Ok(MethodOutcome {
                to_region: trace.region_entry,
                total: trace.iterations(),
                final_lambda: trace.records.last().map(|r| r.lambda),
                certificate: None,
                gap,
                status: status_word(&trace),
                x,
                trace: Some(trace),
            })
        }
        "pfs" => {
            let (x, rep) = pfs_solve(oracle, &inst.x0, &constants_for(method, Variant::Pfs), &path_cfg)?;
            path_outcome(inst, &x, &rep)
        }
        "pcpfs" => {
            let (x, rep) = pcpfs_solve(oracle, &inst.x0, &constants_for(method, Variant::Pcpfs), &path_cfg)?;
            path_outcome(inst, &x, &rep)
        }
        "apfs" => {
            let (x, rep) = adaptive_pfs_solve(oracle, &inst.x0, &path_cfg)?;
            path_outcome(inst, &x, &rep)
        }
        "apcpfs" => {
            let (x, rep) = adaptive_pcpfs_solve(oracle, &inst.x0, &path_cfg)?;
            path_outcome(inst, &x, &rep)
        }
        "crnm" => {
            let lso = lipschitz_oracle(inst)?;
            let cfg = CubicConfig { max_iters, f_star: inst.f_star, ..CubicConfig::default() };
            let (x, trace) = crnm_solve(&lso, &inst.x0, &cfg)?;
            let gap = match inst.f_star {
                Some(fs) => Some(oracle.value(&x)? - fs),
                None => None,
            };
            Ok(MethodOutcome {
                to_region: trace.region_entry,
                total: trace.iterations(),
                final_lambda: trace.records.last().map(|r| r.lambda),
                certificate: None,
                gap,
                status: status_word(&trace),
                x,
                trace: Some(trace),
            })
        }
        "multistage" => {
            let lso = lipschitz_oracle(inst)?;
            let fs = inst.f_star.ok_or_else(|| Error::InvalidArgument("restart scheme needs a lower bound".into()))?;
            let c = cubic_c.ok_or_else(|| Error::InvalidArgument("no rate constant for the restart scheme".into()))?;
            let rep = multistage_solve(&lso, &inst.x0, c, fs, Some(fs))?;
            Ok(MethodOutcome {
                to_region: Some(rep.total_iterations),
                total: rep.total_iterations,
                final_lambda: rep.trace.records.last().map(|r| r.lambda),
                certificate: None,
                gap: Some(oracle.value(&rep.x)? - fs),
                status: status_word(&rep.trace),
                x: rep.x,
                trace: Some(rep.trace),
            })
        }
        "feas-dnm" | "feas-pfs" => {
            let solver = if method.id == "feas-dnm" { FeasSolver::Dnm } else { FeasSolver::Pfs };
            let sol = feasibility_via_dual(feasibility()?, solver, &feas_cfg)?;
            Ok(MethodOutcome {
                to_region: sol.region_entry,
                total: sol.iterations,
                final_lambda: Some(sol.gradient_norm),
                certificate: None,
                gap: Some(sol.residual),
                status: status_word(&sol.trace),
                x: sol.x,
                trace: Some(sol.trace),
            })
        }
        "dual-path" => {
            let rep = dual_pathfollow_exact(feasibility()?, method.gamma.unwrap_or(0.254), max_iters)?;
            let inst = feasibility()?;
            Ok(MethodOutcome {
                to_region: None,
                total: rep.iterations,
                final_lambda: Some(rep.inner_floor),
                certificate: rep.multipliers.last().copied(),
                gap: Some(inst.constraint_residual(&rep.x)),
                status: "ok".into(),
                x: rep.x,
                trace: None,
            })
        }
        "lp-embedding" => {
            let (lp, _) = inst.lp.as_ref().ok_or_else(|| Error::InvalidArgument("not an LP instance".into()))?;
            let sol = solve_lp_via_embedding(lp, 1e-10, max_iters)?;
            Ok(MethodOutcome {
                to_region: None,
                total: sol.solution.iterations,
                final_lambda: Some(sol.solution.gradient_norm),
                certificate: None,
                gap: Some(sol.polished.gap),
                status: status_word(&sol.solution.trace),
                x: sol.polished.x,
                trace: Some(sol.solution.trace),
            })
        }
        other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
    }
}

fn apply_sweep(base: &ProblemSpec, kind: SweepKind, value: f64) -> ProblemSpec {
    let mut spec = base.clone();
    match kind {
        SweepKind::None => {}
        SweepKind::Scale => {
            spec.scale = value;
            spec.x0 = None;
        }
        SweepKind::Eps => spec.eps = value,
        SweepKind::Nu => spec.n = ((value / 2.0).round() as usize).max(1),
    }
    spec
}

fn abscissa(row: &ExperimentRow) -> Option<f64> {
    match row.sweep {
        SweepKind::Scale => row.delta,
        SweepKind::Eps => row.eps.map(|e| (1.0 / e).ln()),
        SweepKind::Nu => row.nu,
        SweepKind::None => None,
    }
}

fn abscissa_name(kind: SweepKind) -> &'static str {
    match kind {
        SweepKind::Scale => "delta",
        SweepKind::Eps => "ln(1/eps)",
        SweepKind::Nu => "nu",
        SweepKind::None => "none",
    }
}

/// Runs every (instance, method, sweep point) sequentially. Row failures are
/// reported in the status column and do not stop the run.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let limit = Duration::from_secs_f64(spec.time_limit_s);
    let points: Vec<Option<f64>> = match spec.sweep.kind {
        SweepKind::None => vec![None],
        _ => spec.sweep.values.iter().map(|&v| Some(v)).collect(),
    };
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    let mut cubic_constant = spec.cubic_constant;
    for base in &spec.instances {
        let base = ProblemSpec { seed: rng.next_u64(), ..base.clone() };
        let wants_cubic = spec.methods.iter().any(|m| m.id == "multistage");
        if wants_cubic && cubic_constant.is_none() && !points.is_empty() {
            cubic_constant = calibrate_on(&base).ok();
        }
        let built: Vec<(Option<f64>, Result<ProblemInstance>)> = points
            .iter()
            .map(|&p| (p, zoo(&p.map_or(base.clone(), |v| apply_sweep(&base, spec.sweep.kind, v)))))
            .collect();
        for method in &spec.methods {
            let mut ladder = Vec::new();
            for (point, inst) in &built {
                let mut row = ExperimentRow {
                    instance: base.name.clone(),
                    seed: base.seed,
                    method: method.id.clone(),
                    sweep: spec.sweep.kind,
                    sweep_value: *point,
                    delta: None,
                    nu: None,
                    eps: None,
                    iterations_to_region: None,
                    total_iterations: None,
                    final_lambda: None,
                    certificate: None,
                    gap: None,
                    wall_time_s: None,
                    status: String::new(),
                };
                let inst = match inst {
                    Ok(inst) => inst,
                    Err(e) => {
                        row.status = format!("error: {e}");
                        rows.push(row);
                        continue;
                    }
                };
                row.delta = inst.delta().ok();
                row.nu = inst.barrier.as_ref().map(|b| b.nu());
                row.eps = inst.feasibility.as_ref().map(|f| f.eps_depth.unwrap_or(inst.spec.eps));
                let start = Instant::now();
                match run_method(inst, method, limit, spec.max_iters, cubic_constant) {
                    Ok(out) => {
                        row.iterations_to_region = out.to_region;
                        row.total_iterations = Some(out.total);
                        row.final_lambda = out.final_lambda;
                        row.certificate = out.certificate;
                        row.gap = out.gap;
                        row.status = out.status;
                    }
                    Err(e) => row.status = format!("error: {e}"),
                }
                if spec.record_time {
                    row.wall_time_s = Some(start.elapsed().as_secs_f64());
                }
                if row.status == "ok" {
                    if let (Some(x), Some(y)) = (abscissa(&row), row.fitted_count()) {
                        ladder.push((x, y as f64));
                    }
                }
                rows.push(row);
            }
            if spec.sweep.kind != SweepKind::None {
                slopes.push(SlopeFit {
                    instance: base.name.clone(),
                    method: method.id.clone(),
                    against: abscissa_name(spec.sweep.kind).into(),
                    points: ladder.len(),
                    slope: ladder_slope(&ladder),
                });
            }
        }
    }
    let failed_rows = rows.iter().filter(|r| r.status != "ok").count();
    let summary = ExperimentSummary {
        name: spec.name.clone(),
        seed: spec.seed,
        csv_schema: CSV_SCHEMA_VERSION,
        cubic_constant,
        rows: rows.len(),
        failed_rows,
        slopes,
    };
    Ok(ExperimentResult { rows, summary })
}

/// Rate constant of the cubic method fitted on `spec` over 200 steps.
pub fn calibrate_on(spec: &ProblemSpec) -> Result<f64> {
    let inst = zoo(spec)?;
    let lso = lipschitz_oracle(&inst)?;
    let xs = inst.x_star.as_ref().ok_or_else(|| Error::InvalidArgument("calibration needs x*".into()))?;
    let fs = inst.f_star.expect("set with x*");
    calibrate_rate_constant(&lso, &inst.x0, xs, fs, 2.0, 200)
}

/// One `(beta, gamma)` grid node of the parameter search.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ParamNode {
    pub beta: f64,
    pub gamma: f64,
    /// `sqrt(beta)/(1 + sqrt(beta)) - beta - gamma`.
    pub centering_slack: f64,
    /// `gamma (1 - 2 beta)/4 - omega_*(beta + gamma)`.
    pub decrease_slack: f64,
    pub feasible: bool,
    /// `gamma (gamma - 2 beta)`.
    pub objective: f64,
}

impl ParamNode {
    pub fn at(beta: f64, gamma: f64) -> Self {
        let sb = beta.sqrt();
        let centering_slack = sb / (1.0 + sb) - beta - gamma;
        let decrease_slack = gamma * (1.0 - 2.0 * beta) / 4.0 - omega_star(beta + gamma).unwrap_or(f64::INFINITY);
        let objective = gamma * (gamma - 2.0 * beta);
        let feasible = centering_slack >= 0.0 && decrease_slack >= 0.0 && gamma > 2.0 * beta;
        ParamNode { beta, gamma, centering_slack, decrease_slack, feasible, objective }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamSearchResult {
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
    /// Row-major in `beta`, then `gamma`.
    pub nodes: Vec<ParamNode>,
    pub argmax: Option<ParamNode>,
}

/// Grid on `(0, beta_max] x (0, gamma_max]` with `n` points per axis. The
/// feasible region lies inside `(0, 0.1] x (0, 0.25]`.
pub fn default_grids(n: usize) -> (Vec<f64>, Vec<f64>) {
    let axis = |hi: f64| (1..=n).map(|i| hi * i as f64 / n as f64).collect();
    (axis(0.1), axis(0.25))
}

pub fn param_search(betas: &[f64], gammas: &[f64]) -> Result<ParamSearchResult> {
    if betas.iter().chain(gammas).any(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::InvalidArgument("grid values must lie in (0, 1)".into()));
    }
    let nodes: Vec<ParamNode> =
        betas.iter().flat_map(|&b| gammas.iter().map(move |&g| ParamNode::at(b, g))).collect();
    let argmax = nodes.iter().filter(|n| n.feasible).max_by(|a, b| a.objective.total_cmp(&b.objective)).copied();
    Ok(ParamSearchResult { betas: betas.to_vec(), gammas: gammas.to_vec(), nodes, argmax })
}

impl ParamSearchResult {
    /// Whether the feasible nodes form one 4-connected component.
    pub fn feasible_region_connected(&self) -> bool {
        let (nb, ng) = (self.betas.len(), self.gammas.len());
        let feasible = |i: usize, j: usize| self.nodes[i * ng + j].feasible;
        let total = self.nodes.iter().filter(|n| n.feasible).count();
        let Some(start) = self.nodes.iter().position(|n| n.feasible) else { return true };
        let mut seen = vec![false; nb * ng];
        let mut stack = vec![(start / ng, start % ng)];
        seen[start] = true;
        let mut count = 0;
        while let Some((i, j)) = stack.pop() {
            count += 1;
            let mut push = |a: usize, b: usize| {
                if feasible(a, b) && !seen[a * ng + b] {
                    seen[a * ng + b] = true;
                    stack.push((a, b));
                }
            };
            if i > 0 {
                push(i - 1, j);
            }
            if i + 1 < nb {
                push(i + 1, j);
            }
            if j > 0 {
                push(i, j - 1);
            }
            if j + 1 < ng {
                push(i, j + 1);
            }
        }
        count == total
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for node in &self.nodes {
            w.serialize(node).map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        }
        w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))
    }
}

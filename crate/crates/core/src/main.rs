use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use scopt::audit::audit;
use scopt::barrier::{dual_pc_solve, primal_pc_solve, BarrierConfig, DualBarrierProblem, PrimalBarrierProblem};
use scopt::bench::{
    calibrate_on, default_grids, param_search, run_experiment, run_method, ExperimentSpec, MethodSpec, ParamNode, METHODS,
};
use scopt::feasibility::{solve_lp_via_embedding, strategy_comparison, FeasibilityInstance};
use scopt::lp::{enumerate_optimum, lp_to_feasibility, random_lp};
use scopt::scalar::{validate_constants, Variant};
use scopt::zoo::{matrix_to_rows, parse_lp_triplets, write_lp_triplets, zoo, ProblemInstance, ProblemSpec};
use scopt::{Error, Result};

/// Environment variable naming the default output directory.
const OUT_ENV: &str = "SCOPT_OUT_DIR";

#[derive(Parser)]
#[command(name = "scopt", version, about = "Newton and path-following methods for self-concordant minimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Seed for every generated instance.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (default: $SCOPT_OUT_DIR, then ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run the invariant checks of the modules involved and print pass/fail.
    #[arg(long)]
    verify: bool,
}

#[derive(Args, Clone)]
struct ProblemArgs {
    /// Zoo instance name.
    #[arg(long, default_value = "scalar-xlnx")]
    problem: String,
    /// Problem file; overrides --problem and the size flags.
    #[arg(long)]
    problem_file: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
}

impl ProblemArgs {
    fn spec(&self, seed: u64) -> Result<ProblemSpec> {
        if let Some(path) = &self.problem_file {
            return ProblemSpec::load(path);
        }
        let mut spec = ProblemSpec { seed, ..ProblemSpec::named(&self.problem) };
        if let Some(v) = self.n {
            spec.n = v;
        }
        if let Some(v) = self.m {
            spec.m = v;
        }
        if let Some(v) = self.scale {
            spec.scale = v;
        }
        if let Some(v) = self.eps {
            spec.eps = v;
        }
        if let Some(v) = self.mu {
            spec.mu = v;
        }
        if let Some(v) = self.sigma {
            spec.sigma = v;
        }
        Ok(spec)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and print a trace summary.
    Solve {
        #[command(flatten)]
        problem: ProblemArgs,
        /// dnm, pfs, pcpfs, apfs, apcpfs, crnm, multistage, feas-dnm, feas-pfs,
        /// dual-path, lp-embedding, barrier-pc or dual-barrier-pc.
        #[arg(long, default_value = "dnm")]
        method: String,
        /// Path constants as `beta,gamma`.
        #[arg(long)]
        consts: Option<String>,
        /// Target accuracy of the barrier methods.
        #[arg(long, default_value_t = 1e-6)]
        accuracy: f64,
        #[arg(long, default_value_t = 1_000_000)]
        max_iters: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Run an experiment preset or file and write CSV and JSON results.
    Bench {
        /// delta-ladder, eps-ladder or nu-ladder.
        #[arg(long, default_value = "delta-ladder")]
        preset: String,
        /// Experiment file (TOML); overrides --preset.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Keep only these methods.
        #[arg(long, value_delimiter = ',')]
        method: Vec<String>,
        /// Fill the wall-time column.
        #[arg(long)]
        time: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Grid search for the path constants of the plain scheme.
    Paramsearch {
        /// Points per axis.
        #[arg(long, default_value_t = 400)]
        grid: usize,
        /// Pair to evaluate as `beta,gamma`.
        #[arg(long)]
        consts: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Reduce an LP to a feasibility problem, solve it and map back.
    LpReduce {
        /// LP in triplet format; a random LP is generated when absent.
        #[arg(long)]
        lp: Option<PathBuf>,
        #[arg(long, default_value_t = 6)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        m: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Compare the feasibility strategies on a box slab.
    Feas {
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Sampled derivative and self-concordance checks of an instance.
    Audit {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[command(flatten)]
        common: Common,
    },
}

fn out_dir(common: &Common) -> PathBuf {
    common.out.clone().or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"))
}

fn parse_pair(s: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [b, g] => {
            let b = b.parse().map_err(|_| Error::InvalidArgument(format!("bad beta `{b}`")))?;
            let g = g.parse().map_err(|_| Error::InvalidArgument(format!("bad gamma `{g}`")))?;
            Ok((b, g))
        }
        _ => Err(Error::InvalidArgument(format!("expected `beta,gamma`, got `{s}`"))),
    }
}

fn verdict(name: &str, ok: bool) -> bool {
    println!("{} {name}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn verify_instance(inst: &ProblemInstance, seed: u64) -> Result<bool> {
    let rep = audit(inst, 20, seed)?;
    let mut ok = true;
    for c in &rep.checks {
        ok &= verdict(&format!("{} ({} cases, worst {:.3e})", c.name, c.cases, c.worst), c.violations == 0);
    }
    Ok(ok)
}

fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

fn solve(problem: &ProblemArgs, method: &str, consts: Option<&str>, accuracy: f64, max_iters: usize, common: &Common) -> Result<bool> {
    let spec = problem.spec(common.seed)?;
    let inst = zoo(&spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
    println!("instance {} (dim {}, M_f {:.6e})", spec.name, inst.dim(), inst.oracle.sc_constant());
    match method {
        "barrier-pc" | "dual-barrier-pc" => {
            let barrier = inst.barrier.clone().ok_or_else(|| Error::InvalidArgument(format!("{} is not a barrier", spec.name)))?;
            let n = barrier.dim();
            let c = spec.c.as_deref().map(DVector::from_column_slice).unwrap_or_else(|| random_vector(n, &mut rng));
            let config = BarrierConfig { max_iters: Some(max_iters), time_limit: None, start: None, interior_point: Some(inst.x0.clone()) };
            if method == "barrier-pc" {
                let prob = PrimalBarrierProblem::new(barrier, c.clone())?;
                let sol = primal_pc_solve(&prob, accuracy, &config)?;
                println!("iterations {} t {:.6e} <c,x> {:.12e} certificate {:.3e}", sol.trace.iterations(), sol.t, c.dot(&sol.x), sol.certificate);
            } else {
                let b = match &spec.a {
                    Some(rows) => DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]),
                    None => DMatrix::from_fn(1, n, |_, _| StandardNormal.sample(&mut rng)),
                };
                let prob = DualBarrierProblem::new(barrier, b, c.clone())?;
                let sol = dual_pc_solve(&prob, accuracy, &config)?;
                println!("iterations {} alpha {:.12e} certificate {:.3e} primal value {:.12e}", sol.trace.iterations(), sol.alpha, sol.certificate, -c.dot(&sol.x));
            }
            return Ok(true);
        }
        m if !METHODS.contains(&m) => return Err(Error::InvalidArgument(format!("unknown method `{m}`"))),
        _ => {}
    }
    let mut ms = MethodSpec::named(method);
    if let Some(pair) = consts {
        let (b, g) = parse_pair(pair)?;
        ms.beta = Some(b);
        ms.gamma = Some(g);
    }
    let cubic_c = if method == "multistage" { Some(calibrate_on(&spec)?) } else { None };
    let out = run_method(&inst, &ms, Duration::from_secs(3600), max_iters, cubic_c)?;
    if let Some(trace) = &out.trace {
        let n = trace.records.len();
        for (k, r) in trace.records.iter().enumerate() {
            if k < 5 || k + 5 >= n {
                println!("  k {:>7} f {:>22.15e} lambda {:.3e}{}", r.iter, r.value, r.lambda, r.t.map(|t| format!(" t {t:.3e}")).unwrap_or_default());
            } else if k == 5 {
                println!("  ...");
            }
        }
        for f in &trace.flags {
            println!("  flag: {f}");
        }
    }
    println!(
        "status {} iterations {} to-region {} final-lambda {} gap {}",
        out.status,
        out.total,
        out.to_region.map_or("-".into(), |v| v.to_string()),
        out.final_lambda.map_or("-".into(), |v| format!("{v:.3e}")),
        out.gap.map_or("-".into(), |v| format!("{v:.3e}")),
    );
    if let Some(dir) = &common.out {
        std::fs::create_dir_all(dir)?;
        if let Some(trace) = &out.trace {
            let path = dir.join(format!("{}-{}-trace.json", spec.name, method));
            std::fs::write(&path, serde_json::to_string_pretty(trace).map_err(|e| Error::InvalidArgument(e.to_string()))?)?;
            println!("wrote {}", path.display());
        }
    }
    let mut ok = out.status == "ok";
    if common.verify {
        if let Some(c) = ms.beta.zip(ms.gamma) {
            let variant = if method.contains("pc") { Variant::Pcpfs } else { Variant::Pfs };
            ok &= verdict("path constants admissible", validate_constants(c.0, c.1, variant).ok());
        }
        ok &= verify_instance(&inst, common.seed)?;
    }
    Ok(ok)
}

fn bench(preset: &str, spec_path: Option<&Path>, methods: &[String], time: bool, common: &Common) -> Result<bool> {
    let mut spec = match spec_path {
        Some(p) => ExperimentSpec::load(p)?,
        None => ExperimentSpec::preset(preset, common.seed)?,
    };
    if !methods.is_empty() {
        spec.methods.retain(|m| methods.contains(&m.id));
    }
    spec.record_time |= time;
    let res = run_experiment(&spec)?;
    let (csv, json) = res.write(&out_dir(common))?;
    println!("wrote {} and {}", csv.display(), json.display());
    for s in &res.summary.slopes {
        let slope = s.slope.map_or("-".into(), |v| format!("{v:.3}"));
        println!("{:<14} slope {slope} against {} ({} points)", s.method, s.against, s.points);
    }
    if res.summary.failed_rows > 0 {
        println!("{} rows failed", res.summary.failed_rows);
    }
    Ok(true)
}

fn paramsearch(grid: usize, consts: Option<&str>, common: &Common) -> Result<bool> {
    if let Some(pair) = consts {
        let (b, g) = parse_pair(pair)?;
        let node = ParamNode::at(b, g);
        println!(
            "beta {b} gamma {g}: feasible {} objective {:.7} centering slack {:.3e} decrease slack {:.3e}",
            node.feasible, node.objective, node.centering_slack, node.decrease_slack
        );
        return Ok(node.feasible);
    }
    let (betas, gammas) = default_grids(grid);
    let res = param_search(&betas, &gammas)?;
    let dir = out_dir(common);
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("paramsearch.csv");
    std::fs::write(&path, res.to_csv()?)?;
    println!("wrote {}", path.display());
    if let Some(best) = res.argmax {
        println!("argmax beta {:.6} gamma {:.6} objective {:.7}", best.beta, best.gamma, best.objective);
    }
    let mut ok = true;
    if common.verify {
        ok &= verdict("default pair feasible", ParamNode::at(0.026, 0.1125).feasible);
        ok &= verdict("feasible region connected", res.feasible_region_connected());
        ok &= verdict("argmax feasible", res.argmax.is_some_and(|n| n.feasible));
        let best = res.argmax.map_or(0.0, |n| n.objective);
        ok &= verdict("argmax within 2% of 0.0068063", (best - 0.0068063).abs() <= 0.02 * 0.0068063);
        ok &= verdict("predictor-corrector pair admissible", validate_constants(0.0015, 0.158, Variant::Pcpfs).ok());
    }
    Ok(ok)
}

fn lp_reduce(lp_path: Option<&Path>, n: usize, m: usize, common: &Common) -> Result<bool> {
    let lp = match lp_path {
        Some(p) => parse_lp_triplets(&std::fs::read_to_string(p)?)?,
        None => random_lp(n, m, &mut ChaCha8Rng::seed_from_u64(common.seed))?,
    };
    let emb = lp_to_feasibility(&lp)?;
    println!("LP {}x{}; embedded dimension {}, dropped rows {:?}", lp.rows(), lp.cols(), emb.reduced_dim(), emb.dropped_rows);
    let dir = out_dir(common);
    std::fs::create_dir_all(&dir)?;
    let file = ProblemSpec {
        n: emb.reduced_dim(),
        m: emb.reduced_a.nrows(),
        a: Some(matrix_to_rows(&emb.reduced_a)),
        b: Some(emb.reduced_b.iter().copied().collect()),
        ..ProblemSpec::named("simplex-feasibility")
    };
    file.save(&dir.join("lp-embedding.toml"))?;
    std::fs::write(dir.join("lp.txt"), write_lp_triplets(&lp))?;
    println!("wrote {} and {}", dir.join("lp-embedding.toml").display(), dir.join("lp.txt").display());
    let sol = solve_lp_via_embedding(&lp, 1e-10, 1_000_000)?;
    let p = &sol.polished;
    println!(
        "primal {:.12e} dual {:.12e} gap {:.3e} (before correction {:.3e}) residuals {:.1e}/{:.1e} iterations {}",
        p.primal_value, p.dual_value, p.gap, sol.raw.gap, p.primal_residual, p.dual_residual, sol.solution.iterations
    );
    let mut ok = p.gap.abs() <= 1e-6;
    if common.verify {
        let reference = enumerate_optimum(&lp);
        ok &= verdict("duality gap <= 1e-6", p.gap.abs() <= 1e-6);
        if let Some(opt) = reference {
            ok &= verdict("matches vertex enumeration", (p.primal_value - opt.value).abs() <= 1e-6 * (1.0 + opt.value.abs()));
        }
        let back = lp_to_feasibility(&parse_lp_triplets(&write_lp_triplets(&lp))?)?;
        ok &= verdict("triplet round trip", back.reduced_a == emb.reduced_a && back.reduced_b == emb.reduced_b);
    }
    Ok(ok)
}

fn feas(n: usize, eps: f64, common: &Common) -> Result<bool> {
    let inst = FeasibilityInstance::box_slab(n, eps)?;
    let rep = strategy_comparison(&inst)?;
    println!("box slab: nu {} eps {:e}", rep.nu, rep.eps);
    for r in &rep.rows {
        println!(
            "{:<10} iterations {:>6} to-region {:>6} predicted order {:>10.3} residual {:.1e}",
            r.method,
            r.iterations,
            r.to_region.map_or("-".into(), |v| v.to_string()),
            r.predicted_order,
            r.residual
        );
    }
    let mut ok = rep.rows.iter().all(|r| r.residual <= 1e-8);
    if common.verify {
        ok &= verdict("all strategies feasible to 1e-8", ok);
        let depth = scopt::feasibility::feasibility_depth(&inst, 1e-6)?;
        ok &= verdict(&format!("measured depth {depth:.6e} matches"), (depth - eps).abs() <= 1e-5);
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Solve { problem, method, consts, accuracy, max_iters, common } => {
            solve(&problem, &method, consts.as_deref(), accuracy, max_iters, &common)
        }
        Command::Bench { preset, spec, method, time, common } => bench(&preset, spec.as_deref(), &method, time, &common),
        Command::Paramsearch { grid, consts, common } => paramsearch(grid, consts.as_deref(), &common),
        Command::LpReduce { lp, n, m, common } => lp_reduce(lp.as_deref(), n, m, &common),
        Command::Feas { n, eps, common } => feas(n, eps, &common),
        Command::Audit { problem, samples, common } => {
            let inst = zoo(&problem.spec(common.seed)?)?;
            let rep = audit(&inst, samples, common.seed)?;
            for c in &rep.checks {
                println!("{:<42} cases {:>4} violations {:>3} worst {:.3e}", c.name, c.cases, c.violations, c.worst);
            }
            Ok(rep.ok())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

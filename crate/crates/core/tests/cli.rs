use std::path::Path;
use std::process::{Command, Output};

use scopt::bench::{run_experiment, ExperimentSpec, CSV_COLUMNS};
use scopt::feasibility::embed_lp;
use scopt::zoo::{parse_lp_triplets, zoo, ProblemSpec};

fn scopt(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scopt")).args(args).env("SCOPT_OUT_DIR", out).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_scalar_example_with_plain_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = scopt(&["solve", "--problem", "scalar-xlnx", "--method", "pfs"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("status ok"));
}

#[test]
fn solve_accepts_constants_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let o = scopt(&["solve", "--problem", "lse", "--n", "3", "--method", "pcpfs", "--consts", "0.0015,0.158", "--verify"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS path constants admissible"));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn inadmissible_constants_fail_at_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let o = scopt(&["solve", "--method", "pfs", "--consts", "0.026,0.2"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn barrier_methods_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    for method in ["barrier-pc", "dual-barrier-pc"] {
        let o = scopt(&["solve", "--problem", "box-barrier", "--n", "3", "--method", method, "--accuracy", "1e-6"], dir.path());
        assert!(o.status.success(), "{method}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("certificate"));
    }
}

#[test]
fn paramsearch_writes_grid_csv_to_env_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = scopt(&["paramsearch", "--grid", "200"], dir.path());
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("paramsearch.csv")).unwrap();
    assert_eq!(csv.lines().count(), 200 * 200 + 1);
    assert!(csv.lines().next().unwrap().contains("beta"));
}

#[test]
fn out_flag_overrides_env_dir() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let o = scopt(&["paramsearch", "--grid", "10", "--out", flag_dir.path().to_str().unwrap()], env_dir.path());
    assert!(o.status.success());
    assert!(flag_dir.path().join("paramsearch.csv").exists());
    assert!(!env_dir.path().join("paramsearch.csv").exists());
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = scopt(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn runtime_failure_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = scopt(&["solve", "--problem", "no-such-problem"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = scopt(&["solve", "--problem-file", "/nonexistent/problem.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn lp_reduce_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = scopt(&["lp-reduce", "--n", "6", "--m", "3", "--seed", "4", "--verify"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
    // the written LP can be read back through --lp
    let lp = dir.path().join("lp.txt");
    let o = scopt(&["lp-reduce", "--lp", lp.to_str().unwrap(), "--verify"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    // the written problem file rebuilds the same feasibility instance
    let lp = parse_lp_triplets(&std::fs::read_to_string(&lp).unwrap()).unwrap();
    let spec = ProblemSpec::load(&dir.path().join("lp-embedding.toml")).unwrap();
    let loaded = zoo(&spec).unwrap().feasibility.unwrap();
    let direct = embed_lp(&lp).unwrap().instance;
    assert_eq!(loaded.a, direct.a);
    assert!((&loaded.b - &direct.b).amax() < 1e-14);
}

#[test]
fn feas_and_audit_verify() {
    let dir = tempfile::tempdir().unwrap();
    let o = scopt(&["feas", "--n", "4", "--eps", "0.01", "--verify"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    for method in ["dnm", "pfs", "dual-path"] {
        assert!(stdout(&o).contains(method));
    }
    let o = scopt(&["audit", "--problem", "simplex-barrier", "--n", "3"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
}

#[test]
fn bench_is_byte_for_byte_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = scopt(&["bench", "--preset", "nu-ladder", "--seed", "3"], d.path());
        assert!(o.status.success());
    }
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    assert_eq!(read(&a, "nu-ladder.csv"), read(&b, "nu-ladder.csv"));
    assert_eq!(read(&a, "nu-ladder.json"), read(&b, "nu-ladder.json"));
}

#[test]
fn experiment_csv_has_versioned_schema() {
    let res = run_experiment(&ExperimentSpec::preset("eps-ladder", 0).unwrap()).unwrap();
    let csv = String::from_utf8(res.to_csv().unwrap()).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert_eq!(header, CSV_COLUMNS);
    assert_eq!(csv.lines().count(), 1 + 3 * 8);
    assert_eq!(res.summary.csv_schema, scopt::bench::CSV_SCHEMA_VERSION);
    let again = run_experiment(&ExperimentSpec::preset("eps-ladder", 0).unwrap()).unwrap();
    assert_eq!(csv.as_bytes(), again.to_csv().unwrap().as_slice());
}

#[test]
fn experiment_file_drives_bench() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"
name = "tiny"
seed = 9
methods = [{ id = "dnm" }, { id = "pfs", beta = 0.026, gamma = 0.1125 }]

[[instances]]
name = "lse"
n = 3
m = 6

[sweep]
kind = "scale"
values = [1.0, 2.0, 4.0]
"#;
    let path = dir.path().join("tiny.toml");
    std::fs::write(&path, spec).unwrap();
    let o = scopt(&["bench", "--spec", path.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("tiny.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",ok")), "{csv}");
}

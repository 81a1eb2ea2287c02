use std::process::Command;

use warped_rcg::problems::{Basin, Problem, ProblemKind};
use warped_rcg::StopReason;
use warped_rcg_cli::{execute, run_spec, sweep, Method, RunSpec, Summary, TRACE_HEADER};

fn wrcg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wrcg"))
}

#[test]
fn squiggle_run_reaches_known_maximum() {
    let out = execute(&RunSpec::new(ProblemKind::Squiggle, 10, Method::Rcg)).unwrap();
    let max = Problem::new(ProblemKind::Squiggle, 10).unwrap().max_value();
    assert!(out.summary.converged);
    assert!((out.summary.final_f - max).abs() < 1e-4, "{} vs {max}", out.summary.final_f);
    assert_eq!(out.summary.basin, Some(Basin::Global));
}

#[test]
fn rosenbrock_run_reaches_global_or_reports_local() {
    let mut spec = RunSpec::new(ProblemKind::Rosenbrock, 2, Method::Rcg);
    spec.sigma_sq = 9e4;
    let s = execute(&spec).unwrap().summary;
    assert!(s.final_f.abs() < 1e-3 || s.basin == Some(Basin::Local), "{s:?}");
}

#[test]
fn quadratic_baseline_is_finite_step() {
    let s = execute(&RunSpec::new(ProblemKind::Quadratic, 5, Method::EuclidCg)).unwrap().summary;
    assert_eq!(s.stop_reason, StopReason::SmallGrad);
    assert!(s.iterations <= 6, "{} iterations", s.iterations);
}

#[test]
fn trace_rows_match_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = RunSpec::new(ProblemKind::Squiggle, 2, Method::Rcg);
    spec.trace_out = Some(dir.path().join("trace.csv"));
    spec.summary_out = Some(dir.path().join("summary.json"));
    run_spec(&spec).unwrap();

    let mut rdr = csv::Reader::from_path(spec.trace_out.as_ref().unwrap()).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, TRACE_HEADER);
    let rows = rdr.records().count();

    let summary: Summary = serde_json::from_reader(std::fs::File::open(spec.summary_out.as_ref().unwrap()).unwrap()).unwrap();
    assert_eq!(rows, summary.iterations);
    assert_eq!(summary.spec, spec);
    assert_eq!(summary.version, env!("CARGO_PKG_VERSION"));
}

#[test]
fn identical_specs_give_identical_traces() {
    let spec = RunSpec::new(ProblemKind::Rosenbrock, 3, Method::Rcg);
    let a = execute(&spec).unwrap();
    let b = execute(&spec).unwrap();
    assert_eq!(a.theta, b.theta);
    assert_eq!(a.trace.len(), b.trace.len());
    for (x, y) in a.trace.iter().zip(&b.trace) {
        assert_eq!((x.f, x.t_k, x.beta_k, x.s_k, x.ls_evals), (y.f, y.t_k, y.beta_k, y.s_k, y.ls_evals));
    }
}

#[test]
fn run_spec_round_trips_through_json() {
    let mut spec = RunSpec::new(ProblemKind::Quadratic, 4, Method::EuclidCg);
    spec.minimize = true;
    spec.config.wolfe_c2 = 0.3;
    let text = serde_json::to_string(&spec).unwrap();
    let back: RunSpec = serde_json::from_str(&text).unwrap();
    assert_eq!(back, spec);
    assert_eq!(serde_json::to_string(&back).unwrap(), text);
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(execute(&RunSpec::new(ProblemKind::Squiggle, 1, Method::Rcg)).is_err());
    let mut spec = RunSpec::new(ProblemKind::Quadratic, 3, Method::Rcg);
    spec.sigma_sq = -1.0;
    assert!(execute(&spec).is_err());
    spec.sigma_sq = 1.0;
    spec.config.wolfe_c2 = 1e-6;
    assert!(execute(&spec).is_err());
}

#[test]
fn minimizing_an_unbounded_problem_stops_in_the_line_search() {
    let mut spec = RunSpec::new(ProblemKind::Squiggle, 3, Method::Rcg);
    spec.minimize = true;
    let out = execute(&spec).unwrap();
    assert_eq!(out.exit_code(), 0);
    let s = out.summary;
    assert_eq!(s.stop_reason, StopReason::LineSearchFail);
    assert!(s.error.is_some());
    assert!(s.basin.is_none() && s.distance_to_maximizer.is_none() && s.max_value.is_none());
}

#[test]
fn squiggle_sweep_has_one_converged_row_per_pair() {
    let template = RunSpec::new(ProblemKind::Squiggle, 2, Method::Rcg);
    let rows = sweep(&template, &[Method::Rcg, Method::EuclidCg], &[2, 10, 50], Some(3), None).unwrap();
    let keys: Vec<(Method, usize)> = rows.iter().map(|r| (r.method, r.dim)).collect();
    assert_eq!(
        keys,
        [(Method::Rcg, 2), (Method::Rcg, 10), (Method::Rcg, 50), (Method::EuclidCg, 2), (Method::EuclidCg, 10), (Method::EuclidCg, 50)]
    );
    assert!(rows.iter().all(|r| r.converged && r.error.is_none()), "{rows:?}");
}

#[test]
fn rosenbrock_sweep_rows_carry_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let template = RunSpec::new(ProblemKind::Rosenbrock, 2, Method::Rcg);
    let rows = sweep(&template, &[Method::Rcg], &[2, 10], None, Some(dir.path())).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert!(r.stop_reason.is_some() && r.iterations.is_some());
        let trace = dir.path().join(format!("rosenbrock_rcg_d{}.csv", r.dim));
        assert_eq!(csv::Reader::from_path(trace).unwrap().records().count(), r.iterations.unwrap());
    }
}

#[test]
fn sweep_failures_become_rows() {
    let template = RunSpec::new(ProblemKind::Squiggle, 2, Method::Rcg);
    let rows = sweep(&template, &[Method::Rcg], &[1, 2], Some(1), None).unwrap();
    assert!(rows[0].error.is_some() && rows[0].stop_reason.is_none());
    assert!(rows[1].converged);
}

#[test]
fn empty_sweep_is_a_usage_error() {
    let template = RunSpec::new(ProblemKind::Squiggle, 2, Method::Rcg);
    assert!(sweep(&template, &[Method::Rcg], &[], None, None).is_err());
    let status = wrcg().args(["sweep", "--problem", "squiggle"]).output().unwrap().status;
    assert_eq!(status.code(), Some(1));
}

#[test]
fn binary_exit_codes() {
    let ok = wrcg().args(["run", "--problem", "quadratic", "--dim", "5", "--method", "euclid_cg"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let summary: Summary = serde_json::from_slice(&ok.stdout).unwrap();
    assert!(summary.iterations <= 6);

    let capped = wrcg().args(["run", "--problem", "rosenbrock", "--dim", "10", "--max-iters", "3"]).output().unwrap();
    assert_eq!(capped.status.code(), Some(0));
    let summary: Summary = serde_json::from_slice(&capped.stdout).unwrap();
    assert_eq!(summary.stop_reason, StopReason::MaxIters);

    for args in [
        vec!["run", "--problem", "squiggle", "--dim", "1"],
        vec!["run", "--problem", "nope", "--dim", "3"],
        vec!["run", "--problem", "squiggle", "--dim", "3", "--sigma-sq", "0"],
        vec!["run", "--problem", "squiggle"],
    ] {
        assert_eq!(wrcg().args(&args).output().unwrap().status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn binary_writes_requested_files() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    let summary = dir.path().join("s.json");
    let status = wrcg()
        .args(["run", "--problem", "rosenbrock", "--dim", "2", "--sigma-sq", "9e4"])
        .arg("--trace-out")
        .arg(&trace)
        .arg("--summary-out")
        .arg(&summary)
        .status()
        .unwrap();
    assert!(status.success());
    let s: Summary = serde_json::from_reader(std::fs::File::open(&summary).unwrap()).unwrap();
    assert_eq!(s.spec.sigma_sq, 9e4);
    assert_eq!(csv::Reader::from_path(&trace).unwrap().records().count(), s.iterations);

    let table = dir.path().join("sweep.csv");
    let status = wrcg()
        .args(["sweep", "--problem", "squiggle", "--dims", "2,3", "--methods", "rcg", "--jobs", "2"])
        .arg("--summary-out")
        .arg(&table)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(csv::Reader::from_path(&table).unwrap().records().count(), 2);
}

use std::path::PathBuf;
use std::process::{Command, Output};

use bpalm_cli::file::{Bounds, ProblemFile, Solution};
use bpalm_cli::report::{Report, TRACE_COLUMNS};
use bpalm_cli::{EXIT_FAILURE, EXIT_MAX_ITER, EXIT_OPTIMAL, EXIT_USAGE};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn bpalm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bpalm")).args(args).output().expect("binary runs")
}

fn json_report(args: &[&str]) -> (i32, Report) {
    let mut all = args.to_vec();
    all.extend(["--report", "json"]);
    let out = bpalm(&all);
    let report = serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}", String::from_utf8_lossy(&out.stderr));
    });
    (out.status.code().unwrap(), report)
}

#[test]
fn equality_fixture_solves_to_tolerance() {
    let path = fixture("eq_qp.toml");
    let (code, r) = json_report(&["--problem", path.to_str().unwrap()]);
    assert_eq!(code, EXIT_OPTIMAL);
    assert_eq!(r.status, "Optimal");
    assert!((r.x[0] - 1.0).abs() < 1e-8);
    assert!((r.y[0] + 1.0).abs() < 1e-8);
}

#[test]
fn zero_outer_iterations_exit_one() {
    let path = fixture("eq_qp.toml");
    let out = bpalm(&["--problem", path.to_str().unwrap(), "--max-outer", "0"]);
    assert_eq!(out.status.code(), Some(EXIT_MAX_ITER));
}

#[test]
fn malformed_document_exits_two() {
    let path = fixture("malformed.toml");
    let out = bpalm(&["--problem", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_FAILURE));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("parse error") && err.contains("line 3"), "{err}");
}

#[test]
fn usage_errors_exit_sixty_four() {
    assert_eq!(bpalm(&[]).status.code(), Some(EXIT_USAGE));
    let path = fixture("eq_qp.toml");
    let p = path.to_str().unwrap();
    assert_eq!(bpalm(&["--problem", p, "--regime", "fast"]).status.code(), Some(EXIT_USAGE));
    assert_eq!(bpalm(&["--problem", p, "--sigma0", "-1"]).status.code(), Some(EXIT_USAGE));
    // exponential multipliers need an inequality constraint
    assert_eq!(bpalm(&["--problem", p, "--dual", "von_neumann"]).status.code(), Some(EXIT_USAGE));
    assert_eq!(bpalm(&["--help"]).status.code(), Some(EXIT_OPTIMAL));
}

#[test]
fn missing_file_exits_two() {
    let out = bpalm(&["--problem", "/nonexistent/problem.toml"]);
    assert_eq!(out.status.code(), Some(EXIT_FAILURE));
}

#[test]
fn json_report_schema_is_stable() {
    let path = fixture("ineq_scalar.toml");
    let out = bpalm(&["--problem", path.to_str().unwrap(), "--report", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in [
        "status",
        "iterations",
        "newton_steps_total",
        "dual_res",
        "primal_res",
        "compl_res",
        "sigma_final",
        "wall_time_ms",
    ] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn exponential_multiplier_fixture() {
    let path = fixture("ineq_scalar.toml");
    let (code, r) = json_report(&["--problem", path.to_str().unwrap(), "--dual", "von_neumann"]);
    assert_eq!(code, EXIT_OPTIMAL);
    assert!((r.x[0] - 1.0).abs() < 1e-8 && (r.y[0] - 1.0).abs() < 1e-8);
    let (code, r) = json_report(&["--problem", path.to_str().unwrap(), "--dual", "spence"]);
    assert_eq!(code, EXIT_OPTIMAL);
    assert!((r.x[0] - 1.0).abs() < 1e-8 && (r.y[0] - 1.0).abs() < 1e-8);
}

#[test]
fn named_objective_fixture() {
    let path = fixture("logistic_ineq.toml");
    let (code, r) = json_report(&["--problem", path.to_str().unwrap()]);
    assert_eq!(code, EXIT_OPTIMAL);
    // symmetric optimum x = (1/2, 1/2) with multiplier sigmoid(1/2)
    assert!((r.x[0] - 0.5).abs() < 1e-8 && (r.x[1] - 0.5).abs() < 1e-8);
    assert!((r.y[0] - 1.0 / (1.0 + (-0.5f64).exp())).abs() < 1e-8);
}

#[test]
fn bounds_go_to_the_barrier_under_sc() {
    let path = fixture("box_qp.toml");
    let p = path.to_str().unwrap();
    let (_, r) = json_report(&["--problem", p, "--max-outer", "2000"]);
    assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 0.5).abs() < 1e-6, "{:?}", r.x);
    assert!((r.y[0] - 0.5).abs() < 1e-6);
    // an energy primal cannot carry bounds on an equality problem
    assert_eq!(bpalm(&["--problem", p, "--regime", "qsc", "--primal", "energy"]).status.code(), Some(EXIT_USAGE));
}

#[test]
fn bounds_fold_into_inequalities_outside_sc() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("boxed.toml");
    let mut file = ProblemFile::load(&fixture("ineq_scalar.toml")).unwrap();
    // x <= 1 from the constraint, x <= 0.5 from the bound
    file.bounds = Some(Bounds { l: vec![f64::NEG_INFINITY], u: vec![0.5] });
    file.solution = None;
    std::fs::write(&path, file.to_toml()).unwrap();
    let (code, r) = json_report(&["--problem", path.to_str().unwrap(), "--regime", "qsc"]);
    assert_eq!(code, EXIT_OPTIMAL);
    assert!((r.x[0] - 0.5).abs() < 1e-8);
    assert_eq!(r.y.len(), 2);
    assert!(r.y[0].abs() < 1e-8 && (r.y[1] - 1.5).abs() < 1e-8);
}

#[test]
fn trace_csv_contract() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let path = fixture("eq_qp.toml");
    let (_, r) = json_report(&["--problem", path.to_str().unwrap(), "--trace", trace.to_str().unwrap()]);
    let mut rd = csv::Reader::from_path(&trace).unwrap();
    let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, TRACE_COLUMNS);
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), r.iterations);
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(row[0].parse::<usize>().unwrap(), k);
        for col in [1, 2, 5, 6, 7, 8, 9, 10] {
            assert!(row[col].parse::<f64>().is_ok(), "column {} of row {k}: {:?}", TRACE_COLUMNS[col], &row[col]);
        }
        assert!(row[3].parse::<usize>().unwrap() <= 50);
    }
    let last: f64 = rows.last().unwrap()[10].parse().unwrap();
    assert!(last < 1e-16);
}

#[test]
fn trace_without_solution_leaves_distance_empty() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let path = fixture("logistic_ineq.toml");
    bpalm(&["--problem", path.to_str().unwrap(), "--trace", trace.to_str().unwrap()]);
    let mut rd = csv::Reader::from_path(&trace).unwrap();
    for row in rd.records() {
        assert_eq!(&row.unwrap()[10], "");
    }
}

#[test]
fn reports_are_byte_identical_without_timing() {
    let path = fixture("ineq_scalar.toml");
    let p = path.to_str().unwrap();
    for format in ["text", "json"] {
        let args = ["--problem", p, "--report", format, "--no-timing", "--diagnose"];
        let a = bpalm(&args);
        let b = bpalm(&args);
        assert!(!a.stdout.is_empty());
        assert_eq!(a.stdout, b.stdout);
    }
}

#[test]
fn diagnose_reports_checks() {
    let path = fixture("eq_qp.toml");
    let (_, r) = json_report(&["--problem", path.to_str().unwrap(), "--diagnose"]);
    let d = r.diagnostics.unwrap();
    assert_eq!(d.fejer_monotone, Some(true));
    assert_eq!(d.summability_holds, Some(true));
    assert!(d.ergodic_max_violation.unwrap() <= 1e-8);
}

#[test]
fn golden_document_round_trip() {
    let gp = bpalm::oracle::golden_suite().into_iter().find(|g| g.name.starts_with("ineq_qp_exp")).unwrap();
    let solution = Solution { x: gp.x_star.iter().copied().collect(), y: gp.y_star.iter().copied().collect() };
    let file = ProblemFile::from_spec(&gp.spec, None, Some(solution)).unwrap();
    let back = ProblemFile::parse(&file.to_toml()).unwrap();
    assert_eq!(back, file);
    let built = back.build(bpalm_cli::file::BoundsRoute::Constraint).unwrap();
    assert_eq!(built.spec.map.a, gp.spec.map.a);
    assert_eq!(built.spec.map.b, gp.spec.map.b);
}

#[test]
fn flag_values_use_underscores() {
    let path = fixture("box_qp.toml");
    let p = path.to_str().unwrap();
    let out = bpalm(&["--problem", p, "--primal", "box_barrier", "--regime", "sc", "--max-outer", "3"]);
    assert_eq!(out.status.code(), Some(EXIT_MAX_ITER));
    let path = fixture("logistic_ineq.toml");
    let out = bpalm(&["--problem", path.to_str().unwrap(), "--dual", "spence", "--regime", "qsc_lipschitz"]);
    assert_eq!(out.status.code(), Some(EXIT_OPTIMAL), "{}", String::from_utf8_lossy(&out.stderr));
}

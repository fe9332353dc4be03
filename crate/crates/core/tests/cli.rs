//! End-to-end runs of the `band-solve` binary.

use std::path::Path;
use std::process::{Command, Output};

use target_zone::exit::ExitProfile;
use target_zone::mc::SimReport;

fn band_solve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_band-solve")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn solve_prints_published_band() {
    let o = band_solve(&["solve"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("a* = 1.98707"), "{s}");
    assert!(s.contains("b* = 2.03214"), "{s}");
}

#[test]
fn solve_writes_value_samples() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("v.csv");
    let o = band_solve(&["solve", "--grid-n", "11", "--out", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,u,u_prime"));
    assert_eq!(lines.count(), 11);

    let json = dir.path().join("v.json");
    let o = band_solve(&["solve", "--format", "json", "--out", json.to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert!((v["a_star"].as_f64().unwrap() - 1.98707).abs() < 1e-4);
    assert_eq!(v["samples"].as_array().unwrap().len(), 201);
}

#[test]
fn exit_profile_vanishes_at_the_edges() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exit.csv");
    let o = band_solve(&["exit", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let p = ExitProfile::read_csv(std::fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(p.grid.len(), 101);
    assert_eq!(p.expected_time[0], 0.0);
    assert_eq!(p.expected_time[100], 0.0);
    assert!((p.p_lower[0] - 1.0).abs() < 1e-12 && p.p_lower[100].abs() < 1e-12);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# wider costs\nc1 = 0.1\nc2 = 0.1\n").unwrap();
    let o = band_solve(&["--config", cfg.to_str().unwrap(), "solve"]);
    assert!(stdout(&o).contains("a* = 1.97703"), "{}", stdout(&o));
    let o = band_solve(&["--config", cfg.to_str().unwrap(), "--c1", "0.0335", "--c2", "0.0335", "solve"]);
    assert!(stdout(&o).contains("a* = 1.98707"), "{}", stdout(&o));
}

#[test]
fn simulate_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = band_solve(&["simulate", "--paths", "200", "--seed", "7", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read_to_string(out).unwrap()
    };
    let (a, b) = (run("a.json"), run("b.json"));
    assert_eq!(a, b);
    let rep = SimReport::from_json(&a).unwrap();
    assert_eq!(rep.config.n_paths, 200);
    assert_eq!(rep.config.seed, 7);
    assert!(rep.cost_mean > 0.0 && rep.cost_stderr > 0.0);
}

#[test]
fn simulate_trace_and_exit_stats() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = dir.path().join("rep.json");
    let o = band_solve(&[
        "simulate",
        "--paths",
        "100",
        "--exit-stats",
        "--trace",
        trace.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rep = SimReport::from_json(&std::fs::read_to_string(out).unwrap()).unwrap();
    let ex = rep.exit_stats.unwrap();
    assert!((0.0..=1.0).contains(&ex.p_lower));
    let text = std::fs::read_to_string(trace).unwrap();
    assert!(text.lines().count() > 10);
}

#[test]
fn sweep_reports_verdicts() {
    let o = band_solve(&["sweep", "--param", "sigma", "--count", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("a* verdict true, b* verdict true"), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 4);
}

#[test]
fn fit_recovers_parameters_from_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("rates.csv");
    let truth = target_zone::ou::OuSpec { rho: 3.0, sigma: 0.02, ..Default::default() };
    let series = target_zone::mc::simulate_ou_series(&truth, truth.m, 1.0 / 250.0, 5000, 3).unwrap();
    target_zone::mc::write_rate_series(&input, &series).unwrap();
    let o = band_solve(&["fit", "--input", input.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["sigma"].as_f64().unwrap() - 0.02).abs() < 0.001);
}

#[test]
fn reproduce_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = band_solve(&["reproduce-paper", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["costs.csv", "parity_shift.csv", "calibration.json", "exit_symmetric.csv", "exit_shifted.csv"] {
        assert!(Path::new(&dir.path().join(f)).exists(), "{f}");
    }
    let costs = std::fs::read_to_string(dir.path().join("costs.csv")).unwrap();
    for line in costs.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((v[1] - v[3]).abs() < 1e-4 && (v[2] - v[4]).abs() < 1e-4, "{line}");
    }
}

#[test]
fn bad_inputs_exit_with_errors() {
    let o = band_solve(&["--sigma", "-1", "solve"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error:"));

    let o = band_solve(&["--a", "2.0", "exit"]);
    assert_eq!(o.status.code(), Some(2));

    let o = band_solve(&["--config", "/nonexistent/run.conf", "solve"]);
    assert_eq!(o.status.code(), Some(2));

    let o = band_solve(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("short.csv");
    std::fs::write(&input, "time,rate\n0,7.4\n1,7.5\n").unwrap();
    let o = band_solve(&["fit", "--input", input.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let diag: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(diag["command"], "fit");
    assert_eq!(diag["error"], "ingestion");
}

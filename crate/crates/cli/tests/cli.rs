use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn relieve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relieve"))
        .args(args)
        .env_remove("RELIEVE_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn simulate(dir: &Path) -> String {
    let p = dir.join("problem");
    let o = relieve(&["simulate", "-o", p.to_str().unwrap(), "--views", "4", "--res", "24x18", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    p.to_str().unwrap().to_owned()
}

#[test]
fn simulate_solve_eval_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let problem = simulate(tmp.path());
    let sol = tmp.path().join("solution");
    let o = relieve(&["solve", &problem, "-o", sol.to_str().unwrap(), "--iters", "50"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("iterations=50"));

    let gt = Path::new(&problem).join("ground_truth");
    let o = relieve(&["eval", sol.to_str().unwrap(), gt.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let report = stdout(&o);
    for key in ["point_rel=", "point_tau=", "depth_rel=", "depth_tau=", "ate=", "auc30=", "view.3.point_tau="] {
        assert!(report.lines().any(|l| l.starts_with(key)), "missing {key}");
    }
    for line in report.lines() {
        let (_, v) = line.split_once('=').unwrap();
        assert!(v.parse::<f64>().unwrap().is_finite(), "{line}");
    }

    let run = fs::read_to_string(sol.join("run.json")).unwrap();
    assert!(run.contains("\"alpha\": 1.0") && run.contains("\"lambda\": 0.5"), "{run}");
    assert!(run.contains("\"grid_size\": 16"));
}

#[test]
fn hyperparameter_flags_override_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let problem = simulate(tmp.path());
    let sol = tmp.path().join("solution");
    let o = relieve(&[
        "solve", &problem, "-o", sol.to_str().unwrap(), "--iters", "3", "--alpha", "0.2", "--lambda", "0.7", "--grid", "4",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let run = fs::read_to_string(sol.join("run.json")).unwrap();
    assert!(run.contains("\"alpha\": 0.2") && run.contains("\"lambda\": 0.7") && run.contains("\"grid_size\": 4"));
}

#[test]
fn repeated_solves_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let problem = simulate(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = relieve(&["solve", &problem, "-o", d.to_str().unwrap(), "--iters", "40", "--threads", "2"]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let problem = simulate(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let o = relieve(&["solve", &problem, "-o", a.to_str().unwrap(), "--iters", "20", "--threads", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let o = Command::new(env!("CARGO_BIN_EXE_relieve"))
        .args(["solve", &problem, "-o", b.to_str().unwrap(), "--iters", "20"])
        .env("RELIEVE_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let strip = |v: Vec<(String, Vec<u8>)>| v.into_iter().filter(|(n, _)| n != "run.json").collect::<Vec<_>>();
    assert_eq!(strip(dir_bytes(&a)), strip(dir_bytes(&b)));
    let run = fs::read_to_string(b.join("run.json")).unwrap();
    assert!(run.contains("\"threads\": 3"));
}

#[test]
fn invalid_thread_variable_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let problem = simulate(tmp.path());
    let o = Command::new(env!("CARGO_BIN_EXE_relieve"))
        .args(["solve", &problem, "-o", tmp.path().join("s").to_str().unwrap(), "--iters", "1"])
        .env("RELIEVE_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn export_ply_floors() {
    let tmp = tempfile::tempdir().unwrap();
    let problem = simulate(tmp.path());
    let sol = tmp.path().join("solution");
    assert_eq!(relieve(&["solve", &problem, "-o", sol.to_str().unwrap(), "--iters", "5"]).status.code(), Some(0));
    let ply = tmp.path().join("c.ply");
    let o = relieve(&["export-ply", sol.to_str().unwrap(), "-o", ply.to_str().unwrap(), "--conf-floor", "2.0"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("vertices=0"));
    let o = relieve(&["export-ply", sol.to_str().unwrap(), "-o", ply.to_str().unwrap(), "--conf-floor", "0"]);
    assert!(stdout(&o).contains(&format!("vertices={}", 4 * 24 * 18)));
}

#[test]
fn unknown_flag_prints_usage_and_exits_one() {
    let o = relieve(&["solve", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(relieve(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(relieve(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_problem_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = relieve(&["solve", tmp.path().join("none").to_str().unwrap(), "-o", "x"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("problem.json"));
}

#[test]
fn grad_check_passes_and_reports_numeric_failure() {
    let o = relieve(&["grad-check", "--probes", "40", "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    // a huge step makes the central difference inaccurate
    let o = relieve(&["grad-check", "--probes", "40", "--step", "0.5"]);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
}

#[test]
fn bad_resolution_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = relieve(&["simulate", "-o", tmp.path().join("p").to_str().unwrap(), "--res", "64by48"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn in_process_entry_point_matches_binary() {
    assert_eq!(relieve_cli::run_cli(["relieve", "--bogus"]), 1);
    assert_eq!(relieve_cli::run_cli(["relieve", "grad-check", "--probes", "10"]), 0);
}

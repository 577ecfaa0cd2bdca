use std::path::Path;
use std::process::{Command, Output};

use flatlin_core::sim::{simulate_open_loop, write_sequence};
use flatlin_core::{zoo, Real};
use serde_json::Value;

fn flatlin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flatlin")).args(args).env_remove("FLATLIN_TOL").output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_shipped_models() {
    for name in zoo::NAMES {
        let out = flatlin(&["validate", name]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        let v = stdout_json(&out);
        assert!(v["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
    }
}

#[test]
fn validate_model_file_by_path() {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models/example1.json");
    assert_eq!(flatlin(&["validate", path(&p)]).status.code(), Some(0));
    assert_eq!(flatlin(&["validate", "no_such_model"]).status.code(), Some(2));
}

#[test]
fn feasibility_exit_codes_and_table() {
    assert_eq!(flatlin(&["feasibility", "example1", "--A", "0,0"]).status.code(), Some(1));
    let out = flatlin(&["feasibility", "example1", "--A", "1,2"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["status"], "feasible");
    let table = stdout_json(&flatlin(&["feasibility", "example1", "--all"]));
    assert_eq!(table.as_array().unwrap().len(), 9);
}

#[test]
fn kappa_of_robot() {
    let out = flatlin(&["kappa", "robot"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["result"]["kappa"], serde_json::json!([2, 2]));
    assert_eq!(v["result"]["R"], serde_json::json!([3, 2]));
    let out = flatlin(&["kappa", "robot", "--tiebreak", "prefer:2,1", "--no-verify"]);
    assert_eq!(stdout_json(&out)["result"]["kappa"], serde_json::json!([3, 1]));
    assert_eq!(flatlin(&["kappa", "robot", "--tiebreak", "bogus"]).status.code(), Some(2));
}

#[test]
fn synthesize_then_simulate_with_v_file() {
    let dir = tempfile::tempdir().unwrap();
    let law = dir.path().join("law.json");
    let out = flatlin(&["synthesize", "example1", "--kappa", "--dynamic", "--out", path(&law)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let d: Value = serde_json::from_str(&std::fs::read_to_string(&law).unwrap()).unwrap();
    assert_eq!(d["kind"], "dynamic");

    let v: Vec<Vec<Real>> = (0..40).map(|k| vec![0.05 * (k as Real * 0.7).sin(), 0.03 * (k as Real * 0.4).cos()]).collect();
    let vfile = dir.path().join("v.csv");
    write_sequence(&v, "v", std::fs::File::create(&vfile).unwrap()).unwrap();
    let sim = dir.path().join("sim");
    let out = flatlin(&[
        "simulate", "example1", "--law", path(&law), "--v", path(&vfile), "--x0", "0.01,-0.02,0", "--horizon", "30", "--out",
        path(&sim),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(sim.join("report.json")).unwrap()).unwrap();
    assert_eq!(rep["passed"], true);
    assert!(rep["report"]["io"]["max_residual"].as_array().unwrap().iter().all(|r| r.as_f64().unwrap() < 1e-8));
    assert!(!sim.join("e.svg").exists());
}

fn robot_reference(dir: &Path) -> std::path::PathBuf {
    let (sys, spec) = zoo::robot();
    let u: Vec<Vec<Real>> = (0..140).map(|k| vec![0.1, 0.1 * (k as Real + 1.0)]).collect();
    let ol = simulate_open_loop(&sys, &spec, &sys.equilibrium.x, &u, None).unwrap();
    let y: Vec<Vec<Real>> = ol.records.iter().map(|r| r.y.clone()).filter(|y| !y[0].is_nan()).collect();
    let p = dir.join("ref.csv");
    write_sequence(&y, "yd", std::fs::File::create(&p).unwrap()).unwrap();
    p
}

#[test]
fn robot_tracking_demo_writes_four_plots() {
    let dir = tempfile::tempdir().unwrap();
    let reference = robot_reference(dir.path());
    let sim = dir.path().join("demo");
    let out = flatlin(&[
        "simulate", "robot", "--ref", path(&reference), "--poles", "0.5,0.5;0.5,0.5", "--x0", "1.03,-0.02,0.05", "--horizon", "100",
        "--out", path(&sim),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let svgs = std::fs::read_dir(&sim).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg")).count();
    assert_eq!(svgs, 4);
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(sim.join("report.json")).unwrap()).unwrap();
    assert_eq!(rep["report"]["error_order"], 4);
    let csv = std::fs::read_to_string(sim.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("k,x1,x2,x3,u1,u2,y1,y2,e1,e2\n"));
    assert_eq!(csv.lines().count(), 101);
}

#[test]
fn simulation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let d = dir.path().join(name);
        let out = flatlin(&["simulate", "helicopter", "--v", "random", "--seed", "11", "--horizon", "25", "--out", path(&d)]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(d.join("trajectory.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn tolerance_override_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("strict");
    let out = Command::new(env!("CARGO_BIN_EXE_flatlin"))
        .args(["simulate", "helicopter", "--v", "random", "--horizon", "25", "--out", path(&d)])
        .env("FLATLIN_TOL", "io=1e-30")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let bad = Command::new(env!("CARGO_BIN_EXE_flatlin")).args(["validate", "robot"]).env("FLATLIN_TOL", "what=1").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn tracking_rejects_mismatched_law() {
    let dir = tempfile::tempdir().unwrap();
    let law = dir.path().join("law.json");
    assert_eq!(flatlin(&["synthesize", "example1", "--A", "2,2", "--dynamic", "--out", path(&law)]).status.code(), Some(0));
    let reference = dir.path().join("ref.csv");
    std::fs::write(&reference, "k,y1,y2\n0,0.1,0.1\n").unwrap();
    let out = flatlin(&["simulate", "example1", "--law", path(&law), "--ref", path(&reference), "--out", path(&dir.path().join("s"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_run_keeps_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("fail");
    let out = flatlin(&["simulate", "robot", "--v", "random", "--seed", "3", "--horizon", "30", "--out", path(&d)]);
    assert_eq!(out.status.code(), Some(1));
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert!(rep["error"].as_str().unwrap().starts_with("step "));
    assert!(d.join("trajectory.csv").exists());
}

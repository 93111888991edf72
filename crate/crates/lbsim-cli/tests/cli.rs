use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"
[model]
lambda = 0.1

[experiment]
t = 1.0
ensemble = 20
grid = 11
seed = 5

[limits]
laplace_samples = 20000
slope_t = 100.0

[volterra]
n_t = 64
mc_samples = 10000
"#;

fn lbsim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lbsim"))
        .args(args)
        .current_dir(dir)
        .env_remove("LBSIM_OUT")
        .output()
        .expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    dir
}

fn records(dir: &Path) -> Vec<Value> {
    fs::read_to_string(dir.join("records.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn zero_potential_paths_have_no_drift() {
    let dir = setup();
    let o = lbsim(
        &[
            "simulate",
            "--config",
            "small.toml",
            "--out",
            "run",
            "--set",
            "model.potential={kind=\"truncated-fourier\"}",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("run");
    let csv = fs::read_to_string(out.join("paths.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&header[..6], &["traj_id", "t", "P", "D", "L", "Q"]);
    let d = header.iter().position(|h| *h == "D").unwrap();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 20 * 11);
    assert!(rows.iter().all(|r| r.split(',').nth(d) == Some("0")));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["command"], "simulate");
    assert!(manifest["config_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn paper_convention_appendix_reports_laplace_row() {
    let dir = setup();
    let o = lbsim(
        &["appendix", "--config", "small.toml", "--out", "app", "--set", "limits.convention=\"paper\""],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let recs = records(&dir.path().join("app"));
    let row = recs
        .iter()
        .find(|r| r["metric"] == "laplace_transform_gamma1")
        .expect("Laplace row");
    assert!((row["value"].as_f64().unwrap() - 0.3906).abs() < 1e-4);
    assert!(recs.iter().all(|r| r["pass"] != false));
}

#[test]
fn config_errors_exit_two_without_outputs() {
    let dir = setup();
    let o = lbsim(&["thm2", "--config", "missing.toml", "--out", "x"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("x").exists());

    let o = lbsim(&["thm2", "--config", "small.toml", "--out", "x", "--set", "model.lamda=0.1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = lbsim(
        &["thm2", "--config", "small.toml", "--out", "x", "--set", "experiment.lambdas=[0.05, 0.1]"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("x").exists());
}

#[test]
fn module_errors_leave_an_error_record() {
    let dir = setup();
    let o = lbsim(&["thm1", "--config", "small.toml", "--out", "t1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("t1/error.json")).unwrap()).unwrap();
    assert_eq!(err["error"], "missing-kappa");
}

#[test]
fn failed_checks_exit_one_unless_asserts_are_off() {
    let dir = setup();
    // Twenty paths cannot reach the KS budget at the smallest mass ratio.
    let base = ["thm2", "--config", "small.toml", "--set", "experiment.lambdas=[0.9, 0.5]"];
    let mut a = base.to_vec();
    a.extend(["--out", "strict"]);
    assert_eq!(lbsim(&a, dir.path()).status.code(), Some(1));
    assert!(dir.path().join("strict/records.csv").exists());
    let mut b = base.to_vec();
    b.extend(["--out", "lenient", "--set", "experiment.assert=false"]);
    assert_eq!(lbsim(&b, dir.path()).status.code(), Some(0));
}

#[test]
fn reruns_are_byte_identical_and_conflicts_are_refused() {
    let dir = setup();
    let run = |out: &str, threads: &str, seed: &str| {
        lbsim(
            &["simulate", "--config", "small.toml", "--out", out, "--threads", threads, "--seed", seed],
            dir.path(),
        )
    };
    assert_eq!(run("a", "1", "9").status.code(), Some(0));
    let first = fs::read(dir.path().join("a/paths.csv")).unwrap();
    let first_records = fs::read(dir.path().join("a/records.jsonl")).unwrap();
    assert_eq!(run("a", "1", "9").status.code(), Some(0));
    assert_eq!(fs::read(dir.path().join("a/paths.csv")).unwrap(), first);
    assert_eq!(run("b", "4", "9").status.code(), Some(0));
    assert_eq!(fs::read(dir.path().join("b/paths.csv")).unwrap(), first);
    assert_eq!(fs::read(dir.path().join("b/records.jsonl")).unwrap(), first_records);

    let o = run("a", "1", "10");
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("different configuration"));
    assert_eq!(fs::read(dir.path().join("a/paths.csv")).unwrap(), first);
}

#[test]
fn output_directory_from_environment() {
    let dir = setup();
    let o = Command::new(env!("CARGO_BIN_EXE_lbsim"))
        .args(["volterra", "--config", "small.toml"])
        .current_dir(dir.path())
        .env("LBSIM_OUT", "from_env")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("from_env");
    assert!(out.join("density.csv").exists());
    assert!(out.join("density.json").exists());
    assert!(records(&out).iter().any(|r| r["metric"] == "mass_error" && r["pass"] == true));
}

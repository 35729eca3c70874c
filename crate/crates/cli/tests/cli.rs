use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_icrb-so3"))
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn icrb-so3")
}

fn write_temp(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn missing_config_exits_2() {
    let out = run(&["static", "does-not-exist.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn unknown_field_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_temp(
        &dir,
        "bad.json",
        r#"{"seed":1,"mode":"static_wahba","n_trials":10,"sigmaa":1,
            "refs":[{"d":[1,0,0],"sigma":1},{"d":[0,1,0],"sigma":1}]}"#,
    );
    let out = run(&["static", &path]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigmaa"));
}

#[test]
fn collinear_references_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_temp(
        &dir,
        "collinear.json",
        r#"{"seed":1,"mode":"static_wahba","n_trials":10,
            "refs":[{"d":[0,0,1],"sigma":1},{"d":[0,0,2],"sigma":1}]}"#,
    );
    assert_eq!(run(&["static", &path]).status.code(), Some(2));
}

#[test]
fn info_prints_information_and_inverse() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_temp(
        &dir,
        "pair.json",
        r#"{"seed":1,"mode":"static_wahba","n_trials":1,
            "refs":[{"d":[1,0,0],"sigma":1},{"d":[0,1,0],"sigma":1}]}"#,
    );
    let out = run(&["info", &path]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let expect_j = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]];
    let expect_inv = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.5]];
    for i in 0..3 {
        for k in 0..3 {
            let j = v["information"][i][k].as_f64().unwrap();
            let inv = v["inverse"][i][k].as_f64().unwrap();
            assert!((j - expect_j[i][k]).abs() < 1e-12);
            assert!((inv - expect_inv[i][k]).abs() < 1e-12);
        }
    }
}

#[test]
fn verify_passes() {
    let out = run(&["verify"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["passed"], true);
}

#[test]
fn static_output_independent_of_jobs() {
    let cfg = scenario("static_triad.json");
    let cfg = cfg.to_str().unwrap();
    let a = run(&["static", cfg, "--trials", "3000", "--jobs", "1"]);
    let b = run(&["static", cfg, "--trials", "3000", "--jobs", "4"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["trial_count"], 3000);
    assert!(v.get("timing").is_none());
}

#[test]
fn dynamic_output_independent_of_jobs() {
    let cfg = scenario("dynamic_alternating.json");
    let cfg = cfg.to_str().unwrap();
    let a = run(&["dynamic", cfg, "--trials", "200", "--jobs", "1"]);
    let b = run(&["dynamic", cfg, "--trials", "200", "--jobs", "3"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn seed_override_changes_output() {
    let cfg = scenario("static_triad.json");
    let cfg = cfg.to_str().unwrap();
    let a = run(&["static", cfg, "--trials", "500", "--seed", "1"]);
    let b = run(&["static", cfg, "--trials", "500", "--seed", "2"]);
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn csv_has_one_row_per_trial() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("errors.csv");
    let cfg = scenario("static_triad.json");
    let out = run(&[
        "static",
        cfg.to_str().unwrap(),
        "--trials",
        "50",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("trial,xi_x,xi_y,xi_z,angle"));
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 50);
    assert!(rows[0].starts_with("0,"));
}

#[test]
fn timing_flag_adds_field() {
    let cfg = scenario("static_triad.json");
    let out = run(&["static", cfg.to_str().unwrap(), "--trials", "10", "--timing"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["timing"].as_f64().unwrap() >= 0.0);
}

#[test]
fn wrong_mode_exits_2() {
    let cfg = scenario("dynamic_alternating.json");
    assert_eq!(run(&["static", cfg.to_str().unwrap()]).status.code(), Some(2));
}

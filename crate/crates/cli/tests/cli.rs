use std::path::Path;
use std::process::{Command, Output};

fn surrogate(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surrogate"))
        .args(args)
        .current_dir(dir)
        .env_remove("SURROGATE_WORKERS")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_and_evaluate_motivating_example() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(surrogate(&["generate", "--example", "motivating", "--out", "m.json"], d).status.success());
    let out = surrogate(
        &["solve", "--instance", "m.json", "--method", "SG", "--gamma", "5", "--out", "t.json", "--report", "r.json"],
        d,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&d.join("r.json"));
    assert_eq!(report["adversary_objective"].as_f64(), Some(43.0));
    assert_eq!(report["optimal"].as_bool(), Some(true));

    let out = surrogate(&["evaluate", "--tree", "t.json", "--instance", "m.json", "--gamma", "5", "--out", "e.csv"], d);
    assert!(out.status.success());
    let record: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(record["nominal_in_sample"].as_f64(), Some(36.0));
    assert_eq!(record["robust_in_sample"].as_f64(), Some(43.0));
    let csv = std::fs::read_to_string(d.join("e.csv")).unwrap();
    assert!(csv.starts_with("instance,method,lambda,kind,split,metric,value"));
    assert!(csv.contains(",train,robust,43.000000"));
}

#[test]
fn nominal_solve_ignores_budget() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    surrogate(&["generate", "--example", "motivating", "--out", "m.json"], d);
    let out = surrogate(&["solve", "--instance", "m.json", "--method", "nominal", "--out", "t.json"], d);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["master_objective"].as_f64(), Some(36.0));
}

#[test]
fn generated_instance_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for name in ["a.json", "b.json"] {
        let out = surrogate(&["generate", "--grid", "3", "--train", "4", "--test", "10", "--seed", "9", "--out", name], d);
        assert!(out.status.success());
    }
    assert_eq!(json(&d.join("a.json")), json(&d.join("b.json")));
    assert_eq!(json(&d.join("a.json"))["train"].as_array().unwrap().len(), 4);
}

#[test]
fn heuristic_solve_with_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    surrogate(&["generate", "--grid", "3", "--train", "3", "--test", "5", "--seed", "1", "--out", "g.json"], d);
    let out = surrogate(
        &[
            "solve", "--instance", "g.json", "--method", "Htree", "--kind", "local", "--lambda", "0.05",
            "--max-restarts", "5", "--out", "t.json",
        ],
        d,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&d.join("t.json"))["depth"].as_u64(), Some(2));
}

#[test]
fn lambda_and_gamma_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let out = surrogate(&["solve", "--instance", "x.json", "--lambda", "0.1", "--gamma", "2", "--out", "t.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot be used with"));
}

#[test]
fn missing_instance_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = surrogate(&["solve", "--instance", "missing.json", "--out", "t.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
}

#[test]
fn experiment_drivers_write_long_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let header = "instance,method,lambda,kind,split,metric,value";
    let runs: [&[&str]; 3] = [
        &["exp-corr", "--count", "2", "--grid", "3", "--train", "3", "--trees", "10", "--out", "c.csv"],
        &[
            "exp-sweep", "--count", "1", "--grid", "3", "--train", "3", "--method", "nominal", "H1", "--lambda", "0",
            "0.1", "--out", "s.csv",
        ],
        &[
            "exp-tables", "--count", "1", "--grid", "3", "--train", "3", "--test", "5", "--method", "nominal", "H1",
            "--out", "t.csv",
        ],
    ];
    for args in runs {
        let out = surrogate(args, d);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["c.csv", "s.csv", "t.csv"] {
        let text = std::fs::read_to_string(d.join(file)).unwrap();
        assert_eq!(text.lines().next(), Some(header), "{file}");
        assert!(text.lines().count() > 1, "{file}");
    }
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pwspm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pwspm"))
        .args(args)
        .current_dir(dir)
        .env("PWSPM_THREADS", "1")
        .env_remove("RUST_BACKTRACE")
        .output()
        .expect("failed to launch pwspm")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = pwspm(dir, args);
    assert!(
        out.status.success(),
        "pwspm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_is_deterministic_and_guards_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "three-circles", "--seed", "7", "-o", "a.csv"]);
    ok(d, &["generate", "three-circles", "--seed", "7", "-o", "b.csv"]);
    assert_eq!(fs::read(d.join("a.csv")).unwrap(), fs::read(d.join("b.csv")).unwrap());

    let mut counts = [0usize; 3];
    for line in fs::read_to_string(d.join("a.csv")).unwrap().lines() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 51);
        counts[fields[50].parse::<usize>().unwrap()] += 1;
    }
    assert_eq!(counts, [222, 500, 778]);

    let before = fs::read(d.join("a.csv")).unwrap();
    let out = pwspm(d, &["generate", "three-lines", "--seed", "1", "-o", "a.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--force"));
    assert_eq!(fs::read(d.join("a.csv")).unwrap(), before);

    ok(d, &["generate", "three-lines", "--seed", "1", "-o", "a.csv", "--force"]);
    assert_ne!(fs::read(d.join("a.csv")).unwrap(), before);
    assert_eq!(json(&d.join("a.json"))["config"]["family"], "three-lines");
}

#[test]
fn knn_lists_and_checks() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "three-lines", "--n-per", "30", "--seed", "2", "-o", "l.csv"]);

    let listing = ok(d, &["knn", "l.csv", "--p", "2", "--source", "4"]);
    let rows: Vec<&str> = listing.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 15);
    assert!(rows[0].starts_with("4\t0"));

    let checked = ok(d, &["knn", "l.csv", "--p", "inf", "--all", "--check-oracle"]);
    assert!(checked.contains("max deviation 0.0e0"), "{checked}");

    let euclid = ok(d, &["knn", "l.csv", "--p", "1", "--all", "--check-euclidean"]);
    assert!(euclid.contains("euclidean check: 90 neighborhoods match"), "{euclid}");

    assert!(!pwspm(d, &["knn", "l.csv", "--p", "2", "--all", "--check-euclidean"]).status.success());
}

#[test]
fn cluster_report_replays() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "three-moons", "--n-per", "60", "--seed", "5", "-o", "m.csv"]);
    ok(d, &["cluster", "m.csv", "--p", "2", "--seed", "9", "-o", "r.json"]);
    ok(d, &["replay", "r.json", "-o", "r2.json"]);

    let (mut first, mut second) = (json(&d.join("r.json")), json(&d.join("r2.json")));
    assert_eq!(second["config"]["out"]["output"], "r2.json");
    first["config"]["out"] = Value::Null;
    second["config"]["out"] = Value::Null;
    assert_eq!(first["config"], second["config"]);
    assert_eq!(first["result"]["labels"], second["result"]["labels"]);
    assert_eq!(first["result"]["labels"].as_array().unwrap().len(), 180);
    let acc = first["result"]["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn bad_arguments_fail() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(!pwspm(d, &["cluster", "missing.csv"]).status.success());
    assert!(!pwspm(d, &["generate", "three-lines", "--bogus"]).status.success());
    assert!(!pwspm(d, &["knn", "x.csv", "--p", "0.5", "--all"]).status.success());
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mbscert"));
    c.env_remove("MBSCERT_SEED");
    c
}

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_ok(dir: &Path, args: &[&str]) -> Value {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn error_kind(out: &Output) -> String {
    let v: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    v["error"]["kind"].as_str().unwrap().to_string()
}

#[test]
fn score_of_shipped_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let path = shipped("reference_strategy.json");
    let v = json_ok(dir.path(), &["score", "--strategy", path.to_str().unwrap()]);
    assert!((v["W"].as_f64().unwrap() - 62.6982).abs() < 1e-3);
    let builtin = json_ok(dir.path(), &["score", "--strategy", "builtin:reference"]);
    assert_eq!(builtin["W"], v["W"]);
    let manifest: Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("score.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["command"], "score");
    assert!(manifest["wall_time_seconds"].as_f64().is_some());
}

#[test]
fn score_of_tables_carries_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let path = shipped("tables_experiment.csv");
    let v = json_ok(dir.path(), &["score", "--tables", path.to_str().unwrap()]);
    assert!((v["W"].as_f64().unwrap() - 62.6208).abs() < 5e-3);
    assert!(v["sigma"].as_f64().unwrap() > 0.0);
}

#[test]
fn certify_shipped_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let path = shipped("tables_experiment.csv");
    let manifest = dir.path().join("m.json");
    let v = json_ok(
        dir.path(),
        &[
            "--manifest",
            manifest.to_str().unwrap(),
            "certify",
            "--tables",
            path.to_str().unwrap(),
            "--bound",
            "62.5152",
        ],
    );
    assert!((v["z"].as_f64().unwrap() - 3.45).abs() < 0.05);
    assert_eq!(v["certified"], true);
    assert!(manifest.exists());
}

#[test]
fn low_visibility_simulation_is_not_certified() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.csv");
    let sim = json_ok(
        dir.path(),
        &[
            "simulate",
            "--visibility",
            "0.9",
            "--seed",
            "4",
            "--out",
            counts.to_str().unwrap(),
        ],
    );
    assert_eq!(sim["settings"], 56);
    assert!(dir.path().join("counts.meta.json").exists());
    assert!(dir.path().join("counts.manifest.json").exists());
    let v = json_ok(
        dir.path(),
        &["certify", "--counts", counts.to_str().unwrap()],
    );
    assert_eq!(v["certified"], false);
}

#[test]
fn enumerate_builtin_u7() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("povms");
    let v = json_ok(
        dir.path(),
        &[
            "enumerate-povms",
            "--unitary",
            "builtin:U7",
            "--out",
            out.to_str().unwrap(),
        ],
    );
    assert_eq!(v["count"], 35);
    let files = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "json")
        })
        .count();
    // 35 POVMs plus the manifest.
    assert_eq!(files, 36);
    assert!(out.join("M4567.json").exists());
    assert_eq!(
        v["comparison_with_printed"]["comparisons"]
            .as_array()
            .unwrap()
            .len(),
        35
    );
}

#[test]
fn enumerate_cleaned_u7_is_complete() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("clean");
    let v = json_ok(
        dir.path(),
        &["enumerate-povms", "--clean", "--out", out.to_str().unwrap()],
    );
    assert!(v["max_completeness_deviation"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn enumerate_u4_gives_one_projective_measurement() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("u4");
    let v = json_ok(
        dir.path(),
        &[
            "enumerate-povms",
            "--unitary",
            "builtin:U4",
            "--out",
            out.to_str().unwrap(),
        ],
    );
    assert_eq!(v["count"], 1);
    assert_eq!(v["povms"][0]["projective"], true);
}

#[test]
fn seesaw_is_reproducible_and_seed_comes_from_env() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "seesaw",
        "--mode",
        "free",
        "--restarts",
        "3",
        "--max-iters",
        "50",
    ];
    let a = run(dir.path(), &[&args[..], &["--seed", "9"]].concat());
    let b = run(dir.path(), &[&args[..], &["--seed", "9"]].concat());
    let c = bin()
        .current_dir(dir.path())
        .env("MBSCERT_SEED", "9")
        .args(args)
        .output()
        .unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn fixed_final_seesaw_writes_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("best.json");
    let v = json_ok(
        dir.path(),
        &[
            "seesaw",
            "--mode",
            "fixed-final",
            "--final",
            "builtin:M4567",
            "--restarts",
            "8",
            "--out",
            out.to_str().unwrap(),
        ],
    );
    assert!((v["best_score"].as_f64().unwrap() - 62.6982).abs() < 1e-3);
    let rescored = json_ok(dir.path(), &["score", "--strategy", out.to_str().unwrap()]);
    assert!((rescored["W"].as_f64().unwrap() - v["best_score"].as_f64().unwrap()).abs() < 1e-9);
}

#[test]
fn unsymmetrized_bound_reports_rank_only() {
    let dir = tempfile::tempdir().unwrap();
    let v = json_ok(
        dir.path(),
        &["bound", "--samples", "40", "--no-symmetrize", "--seed", "1"],
    );
    assert_eq!(v["basis_rank"], 40);
    assert_eq!(v["saturated"], false);
}

#[test]
fn missing_input_is_reported_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["score", "--strategy", "absent.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "io");
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["seesaw", "--mode", "sideways"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "validation");

    let out = run(dir.path(), &["seesaw", "--restarts", "0"]);
    assert_eq!(out.status.code(), Some(2));

    let theory = shipped("tables_theory.csv");
    let out = run(
        dir.path(),
        &["certify", "--tables", theory.to_str().unwrap()],
    );
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = run(
        dir.path(),
        &["simulate", "--visibility", "1.5", "--out", "x.csv"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn export_writes_reference_assets() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("assets");
    json_ok(dir.path(), &["export", "--out", out.to_str().unwrap()]);
    for name in [
        "reference_strategy.json",
        "tables_theory.csv",
        "tables_experiment.csv",
    ] {
        let a = std::fs::read(out.join(name)).unwrap();
        let b = std::fs::read(shipped(name)).unwrap();
        assert_eq!(a, b, "{name} differs from the shipped copy");
    }
}

use std::path::Path;
use std::process::{Command, Output};

fn billiard(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_billiard"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .env_remove("BILLIARD_THREADS")
        .output()
        .expect("binary runs")
}

fn oracle_lambda() -> f64 {
    // One bounce between unit spheres at gap 2 has trace 2 + 2·2/1 = 6.
    let per_bounce = 3.0 - 2.0 * 2f64.sqrt();
    per_bounce.powi(4)
}

#[test]
fn lambda_json_matches_the_ray_transfer_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let out = billiard(dir.path(), &["lambda"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let lambda = v["lambda"].as_f64().unwrap();
    assert!((lambda / oracle_lambda() - 1.0).abs() < 1e-3, "λ = {lambda}");
    assert_eq!(v["d"].as_f64().unwrap(), 2.0);
    assert_eq!(v["eigenvalues"].as_array().unwrap().len(), 4);
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("lambda.json")).unwrap()).unwrap();
    assert_eq!(saved, v);
}

#[test]
fn same_seed_gives_identical_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let out = billiard(d, &["--seed", "7", "crossings", "--rays", "500"]);
        assert!(out.status.success());
        let out = billiard(d, &["trapped-set", "--samples", "200", "--tilts", "500"]);
        assert!(out.status.success());
    }
    for name in ["crossings.csv", "trapped_set.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name} differs between runs");
    }
}

#[test]
fn thread_count_does_not_change_aggregates() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let one = billiard(a.path(), &["--threads", "1", "flow", "--sweep", "2000"]);
    let four = billiard(b.path(), &["--threads", "4", "flow", "--sweep", "2000"]);
    assert!(one.status.success() && four.status.success());
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn csv_floats_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = billiard(dir.path(), &["flow", "--x", "0.3,0,2", "--xi", "0,0,1", "--t", "10"]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("flow.csv")).unwrap();
    let row = text.lines().nth(1).unwrap();
    let first = row.split(',').nth(2).unwrap();
    let mantissa = first.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17, "{first}");
    assert_eq!(first.parse::<f64>().unwrap(), 0.3);
}

#[test]
fn malformed_scene_exits_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.json");
    std::fs::write(&scene, "{\n  \"obstacles\": [\n    {\"kind\": \"cube\"}\n  ]\n}\n").unwrap();
    let out = billiard(dir.path(), &["--scene", scene.to_str().unwrap(), "lambda"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn overlapping_obstacles_are_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.json");
    std::fs::write(
        &scene,
        r#"{"obstacles": [{"kind": "sphere", "center": [0, 0, 0], "radius": 1},
                          {"kind": "sphere", "center": [0, 0, 1.5], "radius": 1}]}"#,
    )
    .unwrap();
    let out = billiard(dir.path(), &["--scene", scene.to_str().unwrap(), "lambda"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_flow_start_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(billiard(dir.path(), &["flow"]).status.code(), Some(2));
}

#[test]
fn bad_thread_variable_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_billiard"))
        .arg("--out")
        .arg(dir.path())
        .arg("lambda")
        .env("BILLIARD_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_all_reports_every_requested_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let out = billiard(dir.path(), &["verify-all", "--only", "2,4"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    let ids: Vec<u64> = v["criteria"].as_array().unwrap().iter().map(|c| c["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, vec![2, 4]);
    assert_eq!(v["passed"], true);
}

#[test]
fn failing_criterion_exits_with_status_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = billiard(dir.path(), &["verify-all", "--only", "5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL criterion  5"));
}

#[test]
fn parametrix_reports_per_story_terms() {
    let dir = tempfile::tempdir().unwrap();
    let out = billiard(dir.path(), &["parametrix", "--t", "0.3", "--h", "0.05", "--K", "0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let stories: Vec<&str> = v["terms"].as_array().unwrap().iter().map(|t| t["story"].as_str().unwrap()).collect();
    // c1 = 0.1, so t = 0.3 admits stories up to length three starting on Θ2.
    assert_eq!(stories, vec!["()", "(2)", "(2,1)", "(2,1,2)"]);
}

#[test]
fn parametrix_rejects_large_h() {
    let dir = tempfile::tempdir().unwrap();
    let out = billiard(dir.path(), &["parametrix", "--h", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
}

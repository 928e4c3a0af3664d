use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn fixture(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel).display().to_string()
}

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn run(args: &[&str]) -> Run {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("ecc-screen").chain(args.iter().copied());
    let code = ecc_screen::cli::run(argv, &mut out, &mut err);
    Run { code, out: String::from_utf8(out).unwrap(), err: String::from_utf8(err).unwrap() }
}

fn json(r: &Run) -> Value {
    assert_eq!(r.code, 0, "stderr: {}", r.err);
    serde_json::from_str(&r.out).unwrap()
}

#[test]
fn eval_perfect_detections_score_one() {
    let ann = fixture("annotations.json");
    let det = fixture("detections_perfect.json");
    let v = json(&run(&["eval", "--annotations", &ann, "--detections", &det]));
    for key in ["mAP", "AP50", "AP75", "AR"] {
        assert_eq!(v[key], 1.0, "{key}");
    }
    let text = run(&["eval", "--annotations", &ann, "--detections", &det, "--format", "text"]);
    assert_eq!(text.code, 0);
    assert!(text.out.lines().any(|l| l.starts_with("overall      1.000   1.000   1.000   1.000")), "{}", text.out);
    assert!(text.out.contains("spurious"));
}

#[test]
fn eval_matches_golden_output() {
    let r = run(&[
        "eval",
        "--annotations",
        &fixture("annotations.json"),
        "--detections",
        &fixture("detections_partial.json"),
    ]);
    let golden: Value =
        serde_json::from_str(&std::fs::read_to_string(fixture("golden/eval_partial.json")).unwrap()).unwrap();
    assert_eq!(json(&r), golden);
}

#[test]
fn eval_writes_confusion_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cm.json");
    let r = run(&[
        "eval",
        "--annotations",
        &fixture("annotations.json"),
        "--detections",
        &fixture("detections_partial.json"),
        "--exclude-other",
        "--confusion-out",
        out.to_str().unwrap(),
    ]);
    let v = json(&r);
    assert_eq!(v["exclude_other"], true);
    // Per-group rows stay for diagnostics; `other` just leaves the mean.
    let groups = v["per_group"].as_array().unwrap();
    let mean = groups.iter().filter(|g| g["group"] != "other").map(|g| g["AP"].as_f64().unwrap()).sum::<f64>() / 3.0;
    assert!((v["mAP"].as_f64().unwrap() - mean).abs() < 1e-12);
    let cm: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert!(cm.is_object());
}

#[test]
fn roc_emits_csv_and_rejects_bad_thresholds() {
    let ann = fixture("annotations.json");
    let det = fixture("detections_partial.json");
    let r = run(&["roc", "--annotations", &ann, "--detections", &det, "--thresholds", "1.01,0.5,0"]);
    assert_eq!(r.code, 0, "{}", r.err);
    let lines: Vec<&str> = r.out.lines().collect();
    assert_eq!(lines[0], "threshold,sensitivity,specificity");
    assert_eq!(lines[1], "1.01,0,1");
    assert_eq!(lines.len(), 4);

    let r = run(&["roc", "--annotations", &ann, "--detections", &det, "--thresholds", "0,0.5"]);
    assert_eq!(r.code, 1);
    assert!(r.err.starts_with("error: thresholds must be finite and strictly decreasing"), "{}", r.err);
}

#[test]
fn weights_from_census_and_annotations() {
    let v = json(&run(&["weights", "--census", &fixture("census.json")]));
    let w = &v["weights"];
    let sum: f64 = ["normal", "level1", "level2", "other"].iter().map(|g| w[g].as_f64().unwrap()).sum();
    assert!((sum / 4.0 - 1.0).abs() < 1e-12);
    assert!((v["raw_mean"].as_f64().unwrap() - 3.12645).abs() < 1e-5);

    let v = json(&run(&["weights", "--annotations", &fixture("annotations.json")]));
    assert!(v["weights"]["other"].as_f64().unwrap() > v["weights"]["normal"].as_f64().unwrap());

    assert_eq!(run(&["weights"]).code, 2);
    assert_eq!(run(&["weights", "--census", "a", "--annotations", "b"]).code, 2);
}

#[test]
fn stats_counts_boxes() {
    let v = json(&run(&["stats", "--annotations", &fixture("annotations.json")]));
    assert_eq!(v["image_count"], 4);
    assert_eq!(v["total_boxes"], 24);
    assert_eq!(v["group_counts"]["level1"], 6);
}

#[test]
fn split_is_deterministic_and_writes_files() {
    let ann = fixture("annotations.json");
    let a = run(&["split", "--annotations", &ann, "--seed", "7"]);
    let b = run(&["split", "--annotations", &ann, "--seed", "7"]);
    assert_eq!(a.out, b.out);
    let v = json(&a);
    let (train, test) = (v["train"].as_array().unwrap(), v["test"].as_array().unwrap());
    assert_eq!(train.len() + test.len(), 4);
    assert!(!test.is_empty());

    let dir = tempfile::tempdir().unwrap();
    let (tr, te): (PathBuf, PathBuf) = (dir.path().join("train.json"), dir.path().join("test.json"));
    let r = run(&[
        "split",
        "--annotations",
        &ann,
        "--seed",
        "7",
        "--train-out",
        tr.to_str().unwrap(),
        "--test-out",
        te.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    let train_file = ecc_screen::dataset::load_annotations(&std::fs::read_to_string(&tr).unwrap()).unwrap();
    assert_eq!(train_file.len(), train.len());
    assert!(te.exists());
}

#[test]
fn simulate_urgent_frame() {
    let r = run(&[
        "simulate",
        "--landmarks",
        &fixture("frames/urgent.json"),
        "--backend-fixture",
        &fixture("backend_mock.json"),
        "--answers",
        &fixture("answers/low.json"),
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("Risk level: Urgent"), "{}", r.out);
    assert!(r.out.contains("SEE A DENTIST IMMEDIATELY"));

    let j = run(&[
        "simulate",
        "--landmarks",
        &fixture("frames/early.json"),
        "--backend-fixture",
        &fixture("backend_mock.json"),
        "--format",
        "json",
    ]);
    let v = json(&j);
    assert_eq!(v["level"], "Moderate");
    assert_eq!(v["detections"]["max_severity"], "level1");
}

#[test]
fn simulate_rejects_tilted_frame() {
    let r = run(&[
        "simulate",
        "--landmarks",
        &fixture("frames/tilted.json"),
        "--backend-fixture",
        &fixture("backend_mock.json"),
    ]);
    assert_eq!(r.code, 1);
    assert!(
        r.out.contains("frame rejected (reject_tilted)") || r.err.contains("reject_tilted"),
        "{} / {}",
        r.out,
        r.err
    );
}

#[test]
fn usage_errors_exit_two() {
    let r = run(&["eval", "--annotations", "x", "--detections", "y", "--bogus"]);
    assert_eq!(r.code, 2);
    assert!(r.err.contains("--bogus"));
    assert_eq!(run(&["split", "--annotations", "x"]).code, 2);
    assert_eq!(run(&["frobnicate"]).code, 2);
    assert_eq!(run(&["split", "--annotations", "x", "--seed", "1", "--train-out", "t"]).code, 2);
}

#[test]
fn help_and_version_go_to_stdout() {
    let r = run(&["--help"]);
    assert_eq!(r.code, 0);
    assert!(r.out.contains("simulate"));
    let r = run(&["--version"]);
    assert_eq!(r.code, 0);
    assert!(r.out.contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn missing_input_file_is_domain_error() {
    let r = run(&["stats", "--annotations", "/nonexistent/annotations.json"]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("/nonexistent/annotations.json"));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_ecc-screen");
    let ok = Command::new(bin).args(["stats", "--annotations", &fixture("annotations.json")]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let usage = Command::new(bin).args(["split"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(2));
    let rejected = Command::new(bin)
        .args([
            "simulate",
            "--landmarks",
            &fixture("frames/small.json"),
            "--backend-fixture",
            &fixture("backend_mock.json"),
        ])
        .output()
        .unwrap();
    assert_eq!(rejected.status.code(), Some(1));
}

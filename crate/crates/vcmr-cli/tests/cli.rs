//! End-to-end tests of the `vcmr` binary: every invocation here must be
//! byte-deterministic and exercise the documented file formats.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn vcmr(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vcmr"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) {
    let out = vcmr(args, cwd);
    assert!(
        out.status.success(),
        "vcmr {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn workspace(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("vcmr-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_constant_pgm(path: &Path, width: usize, height: usize, value: u8) {
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend(vec![value; width * height]);
    fs::write(path, bytes).unwrap();
}

#[test]
fn extract_constant_image_yields_empty_list() {
    let dir = workspace("extract-empty");
    write_constant_pgm(&dir.join("flat.pgm"), 64, 64, 128);
    ok(&["extract", "flat.pgm", "--out", "kp.json"], &dir);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("kp.json")).unwrap()).unwrap();
    assert_eq!(json[0]["frame"], 0);
    assert_eq!(json[0]["keypoints"].as_array().unwrap().len(), 0);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn lossless_encode_decode_round_trips_to_extract_output() {
    let dir = workspace("lossless-e2e");
    ok(
        &["gen", "--out", "orig", "--frames", "2", "--width", "96", "--height", "96", "--seed", "5"],
        &dir,
    );
    ok(&["degrade", "orig", "--qp", "37", "--out", "dec"], &dir);
    ok(&["extract", "orig", "--out", "orig.json"], &dir);
    ok(
        &["encode", "--orig", "orig", "--dec", "dec", "--out", "res.vcmr", "--lossless", "--qp", "37"],
        &dir,
    );
    ok(
        &["decode", "--dec", "dec", "--residual", "res.vcmr", "--out", "rec.json"],
        &dir,
    );
    let orig = fs::read(dir.join("orig.json")).unwrap();
    let rec = fs::read(dir.join("rec.json")).unwrap();
    assert_eq!(orig, rec, "reconstructed JSON differs from original extraction");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn sweep_emits_monotone_l_and_a_fit() {
    let dir = workspace("sweep");
    ok(
        &["gen", "--out", "orig", "--frames", "1", "--width", "128", "--height", "128", "--seed", "9"],
        &dir,
    );
    ok(&["sweep", "--orig", "orig", "--qp", "17,47", "--out", "out"], &dir);

    let csv = fs::read_to_string(dir.join("out/run.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3, "header plus one row per qp: {csv}");
    let l_of = |line: &str| -> f64 { line.split(',').nth(14).unwrap().parse().unwrap() };
    let l17 = l_of(lines[1]);
    let l47 = l_of(lines[2]);
    assert!(l47 >= l17, "L(47)={l47} < L(17)={l17}");

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/summary.json")).unwrap()).unwrap();
    assert!(summary["fit"]["slope"].is_number());
    assert!(summary["spearman_rho_l_vs_qp"].is_number());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn outputs_are_identical_across_job_counts() {
    let dir = workspace("determinism");
    ok(
        &["gen", "--out", "orig", "--frames", "3", "--width", "96", "--height", "96", "--seed", "3"],
        &dir,
    );
    ok(
        &["--jobs", "1", "sweep", "--orig", "orig", "--qp", "22,42", "--out", "a"],
        &dir,
    );
    ok(
        &["--jobs", "4", "sweep", "--orig", "orig", "--qp", "22,42", "--out", "b"],
        &dir,
    );
    assert_eq!(
        fs::read(dir.join("a/run.csv")).unwrap(),
        fs::read(dir.join("b/run.csv")).unwrap()
    );
    assert_eq!(
        fs::read(dir.join("a/summary.json")).unwrap(),
        fs::read(dir.join("b/summary.json")).unwrap()
    );
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn external_sweep_ingests_decoded_directories_and_tags() {
    let dir = workspace("external");
    ok(
        &["gen", "--out", "orig", "--frames", "2", "--width", "96", "--height", "96", "--seed", "4"],
        &dir,
    );
    ok(&["degrade", "orig", "--qp", "22", "--out", "dec22"], &dir);
    ok(&["degrade", "orig", "--qp", "42", "--out", "dec42"], &dir);
    fs::write(
        dir.join("dec22/manifest.json"),
        r#"{"frames": [{"index": 0, "type": "I"}, {"index": 1, "type": "P"}]}"#,
    )
    .unwrap();
    ok(
        &[
            "sweep",
            "--orig",
            "orig",
            "--external",
            "22=dec22",
            "--external",
            "42=dec42",
            "--out",
            "out",
        ],
        &dir,
    );
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/summary.json")).unwrap()).unwrap();
    assert!(summary["fit"]["intercept"].is_number());
    assert_eq!(summary["runs"][0]["frames"][0]["coding_type"], "I");
    assert_eq!(summary["runs"][0]["frames"][1]["coding_type"], "P");
    // the surrogate-decoded qp 42 run has no tags
    assert!(summary["runs"][1]["frames"][0].get("coding_type").is_none());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn match_command_reports_pairs_and_partitions() {
    let dir = workspace("match");
    ok(
        &["gen", "--out", "orig", "--frames", "1", "--width", "96", "--height", "96", "--seed", "6"],
        &dir,
    );
    ok(&["degrade", "orig", "--qp", "42", "--out", "dec"], &dir);
    ok(&["extract", "orig", "--out", "orig.json"], &dir);
    ok(&["extract", "dec", "--out", "dec.json"], &dir);
    ok(&["match", "orig.json", "dec.json", "--out", "report.json"], &dir);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let frame = &report[0];
    let pairs = frame["pairs"].as_array().unwrap().len();
    let missed = frame["missed"].as_array().unwrap().len();
    let orig: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("orig.json")).unwrap()).unwrap();
    let n_orig = orig[0]["keypoints"].as_array().unwrap().len();
    assert_eq!(pairs + missed, n_orig);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn extract_without_out_prints_json_to_stdout() {
    let dir = workspace("stdout");
    write_constant_pgm(&dir.join("flat.pgm"), 64, 64, 200);
    let out = vcmr(&["extract", "flat.pgm"], &dir);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json[0]["keypoints"].as_array().unwrap().len(), 0);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn single_qp_sweep_omits_the_fit() {
    let dir = workspace("single-qp");
    ok(
        &["gen", "--out", "orig", "--frames", "1", "--width", "96", "--height", "96", "--seed", "8"],
        &dir,
    );
    ok(&["sweep", "--orig", "orig", "--qp", "32", "--out", "out"], &dir);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/summary.json")).unwrap()).unwrap();
    assert!(summary.get("fit").is_none());
    assert_eq!(summary["runs"].as_array().unwrap().len(), 1);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn featureless_frames_sweep_to_zero_l() {
    let dir = workspace("flat-sweep");
    fs::create_dir_all(dir.join("orig")).unwrap();
    write_constant_pgm(&dir.join("orig/frame_0000.pgm"), 64, 64, 128);
    ok(&["sweep", "--orig", "orig", "--qp", "17,47", "--out", "out"], &dir);
    let csv = fs::read_to_string(dir.join("out/run.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[2], "0", "n_orig: {line}");
        assert_eq!(cols[14], "0", "L: {line}");
    }
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn mismatched_sequences_fail_with_machine_readable_error() {
    let dir = workspace("mismatch");
    ok(
        &["gen", "--out", "a", "--frames", "2", "--width", "96", "--height", "96", "--seed", "1"],
        &dir,
    );
    ok(
        &["gen", "--out", "b", "--frames", "1", "--width", "96", "--height", "96", "--seed", "1"],
        &dir,
    );
    let out = vcmr(
        &["encode", "--orig", "a", "--dec", "b", "--out", "x.vcmr"],
        &dir,
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert!(parsed["error"].as_str().unwrap().contains("differ in length"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn out_of_range_qp_is_rejected() {
    let dir = workspace("bad-qp");
    write_constant_pgm(&dir.join("frame_0000.pgm"), 64, 64, 90);
    let out = vcmr(&["degrade", "frame_0000.pgm", "--qp", "99", "--out", "x"], &dir);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("outside [0, 51]"), "stderr: {stderr}");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn truncated_residual_is_rejected() {
    let dir = workspace("truncated");
    ok(
        &["gen", "--out", "orig", "--frames", "1", "--width", "96", "--height", "96", "--seed", "2"],
        &dir,
    );
    ok(&["degrade", "orig", "--qp", "32", "--out", "dec"], &dir);
    ok(
        &["encode", "--orig", "orig", "--dec", "dec", "--out", "res.vcmr"],
        &dir,
    );
    let mut bytes = fs::read(dir.join("res.vcmr")).unwrap();
    bytes.pop();
    fs::write(dir.join("trunc.vcmr"), bytes).unwrap();
    let out = vcmr(
        &["decode", "--dec", "dec", "--residual", "trunc.vcmr"],
        &dir,
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("mid-record"), "stderr: {stderr}");
    fs::remove_dir_all(&dir).unwrap();
}

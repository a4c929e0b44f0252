use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use skillgauge_core::ingest::{frame_file_name, pgm};

fn skillgauge(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skillgauge"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("skillgauge_report.json")).unwrap()).unwrap()
}

/// 8x8 frames at a flat 1 m depth; fx = fy = 10 and the principal point at
/// (4, 4), so a box centered on pixel column u sits at x = (u - 4) / 10 m.
fn write_participant(root: &Path, id: &str, left_u: &[f64], labels: &[&str]) {
    let dir = root.join(id);
    let depth = dir.join("depth");
    fs::create_dir_all(&depth).unwrap();
    fs::write(depth.join("meta.json"), r#"{"width": 8, "height": 8, "fps": 15, "depth_scale": 0.001}"#).unwrap();
    let mut lines = String::new();
    for (t, u) in left_u.iter().enumerate() {
        fs::write(depth.join(frame_file_name(t)), pgm::encode_u16(8, 8, &[1000; 64])).unwrap();
        let dets = json!({"frame": t, "detections": [
            {"class": "Left Hand", "confidence": 0.9, "bbox": [u - 1.0, 3.5, u + 1.0, 5.5]},
            {"class": "Right Hand", "confidence": 0.8, "bbox": [5.5, 3.5, 7.5, 5.5]},
        ]});
        lines.push_str(&format!("{dets}\n"));
    }
    fs::write(dir.join("detections.jsonl"), lines).unwrap();
    fs::write(dir.join("labels.txt"), labels.join("\n") + "\n").unwrap();
}

fn write_manifest(root: &Path, entries: &[(&str, &str)]) -> PathBuf {
    let entries: Vec<Value> = entries
        .iter()
        .map(|(id, group)| {
            json!({
                "participant": id, "group": group, "task": "knot",
                "depth_dir": format!("{id}/depth"),
                "detections": format!("{id}/detections.jsonl"),
                "labels": format!("{id}/labels.txt"),
            })
        })
        .collect();
    let path = root.join("manifest.json");
    fs::write(&path, serde_json::to_string(&entries).unwrap()).unwrap();
    fs::write(
        root.join("intrinsics.json"),
        r#"{"fx": 10, "fy": 10, "cx": 4, "cy": 4, "depth_scale": 0.001}"#,
    )
    .unwrap();
    path
}

/// Experts move their left hand 0.1 m and 0.2 m, residents 0.3 m and 0.4 m.
fn four_participants(root: &Path) {
    let labels = ["G0", "G1", "G1"];
    write_participant(root, "e1", &[4.0, 4.5, 5.0], &labels);
    write_participant(root, "e2", &[3.0, 4.0, 5.0], &labels);
    write_participant(root, "r1", &[2.0, 3.5, 5.0], &labels);
    write_participant(root, "r2", &[2.0, 4.0, 6.0], &labels);
    write_manifest(root, &[("e1", "Expert"), ("e2", "Expert"), ("r1", "Resident"), ("r2", "Resident")]);
}

#[test]
fn path3d_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    four_participants(dir.path());
    let out = skillgauge(
        &["path3d", "manifest.json", "--intrinsics", "intrinsics.json", "--gap-policy", "skip", "--csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "skillgauge_report.json\n");

    let r = report(dir.path());
    assert_eq!(r["command"], "path3d");
    assert_eq!(r["config"]["gap_policy"], "skip");
    let lengths: Vec<f64> = r["participants"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["path"]["combined"]["length_3d"].as_f64().unwrap())
        .collect();
    for (got, want) in lengths.iter().zip([0.1, 0.2, 0.3, 0.4]) {
        assert!((got - want).abs() < 1e-9, "{lengths:?}");
    }
    let stat = &r["statistics"][0];
    assert_eq!(stat["method"], "Exact");
    // experts hold the two smallest of four values: 2 of 6 splits are as extreme
    assert!((stat["p"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-6);
    assert_eq!(stat["u"], 0.0);
    assert!(dir.path().join("skillgauge_report.csv").exists());
}

#[test]
fn gesture_dist_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    four_participants(dir.path());
    let out = skillgauge(&["gesture-dist", "manifest.json", "--intrinsics", "intrinsics.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    // the first step starts on the G0 frame, the second on a G1 frame
    let e2 = &r["participants"][1]["gestures"]["combined"];
    assert!((e2["G0"]["distance"].as_f64().unwrap() - 0.1).abs() < 1e-9);
    assert!((e2["G1"]["distance"].as_f64().unwrap() - 0.1).abs() < 1e-9);
    let metrics: Vec<&str> = r["statistics"].as_array().unwrap().iter().map(|s| s["metric"].as_str().unwrap()).collect();
    assert_eq!(metrics, ["gesture_distance:G0", "gesture_distance:G1"]);
}

#[test]
fn gesture_dist_rejects_short_labels() {
    let dir = tempfile::tempdir().unwrap();
    four_participants(dir.path());
    fs::write(dir.path().join("e1/labels.txt"), "G0\nG0\n").unwrap();
    let out = skillgauge(&["gesture-dist", "manifest.json", "--intrinsics", "intrinsics.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("e1"));
}

#[test]
fn empty_manifest_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("manifest.json"), "[]").unwrap();
    write_manifest(dir.path(), &[]);
    let out = skillgauge(&["path3d", "manifest.json", "--intrinsics", "intrinsics.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("skillgauge_report.json").exists());
}

#[test]
fn validate_reports_each_participant() {
    let dir = tempfile::tempdir().unwrap();
    four_participants(dir.path());
    let out = skillgauge(&["validate", "manifest.json", "--jobs", "2"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(dir.path())["participants"].as_array().unwrap().len(), 4);
}

fn write_jsonl(path: &Path, lines: &[Value]) {
    let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    fs::write(path, text).unwrap();
}

fn detection_files(dir: &Path) {
    let gt = [
        json!({"frame": 0, "detections": [
            {"class": "Left Hand", "bbox": [0, 0, 10, 10]},
            {"class": "Right Hand", "bbox": [20, 0, 30, 10]},
            {"class": "Needle Driver", "bbox": [40, 40, 60, 50]},
        ]}),
        json!({"frame": 1, "detections": [{"class": "Left Hand", "bbox": [2, 2, 12, 12]}]}),
    ];
    write_jsonl(&dir.join("gt.jsonl"), &gt);
    let pred: Vec<Value> = gt
        .iter()
        .map(|line| {
            let mut line = line.clone();
            for d in line["detections"].as_array_mut().unwrap() {
                d["confidence"] = json!(0.9);
            }
            line
        })
        .collect();
    write_jsonl(&dir.join("pred.jsonl"), &pred);
}

#[test]
fn eval_detect_perfect_and_filtered() {
    let dir = tempfile::tempdir().unwrap();
    detection_files(dir.path());
    let out = skillgauge(&["eval-detect", "--pred", "pred.jsonl", "--gt", "gt.jsonl", "--csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(dir.path())["detection"]["table"]["map_50_95"], 1.0);
    let csv = fs::read_to_string(dir.path().join("skillgauge_report.csv")).unwrap();
    assert!(csv.starts_with("class,occurrence,AP_50_95\n"));
    assert!(csv.contains("Left Hand,2,1.000\n"));
    assert!(csv.ends_with("Average,-,1.000\n"));

    let out = skillgauge(
        &["eval-detect", "--pred", "pred.jsonl", "--gt", "gt.jsonl", "--classes", "Left Hand,Right Hand"],
        dir.path(),
    );
    assert!(out.status.success());
    let r = report(dir.path());
    assert_eq!(r["detection"]["table"]["classes"].as_array().unwrap().len(), 2);
}

#[test]
fn eval_detect_without_predictions_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    detection_files(dir.path());
    fs::write(dir.path().join("pred.jsonl"), "").unwrap();
    let out = skillgauge(&["eval-detect", "--pred", "pred.jsonl", "--gt", "gt.jsonl"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(dir.path())["detection"]["table"]["map_50_95"], 0.0);
}

#[test]
fn eval_detect_unknown_class_fails() {
    let dir = tempfile::tempdir().unwrap();
    detection_files(dir.path());
    fs::write(
        dir.path().join("pred.jsonl"),
        r#"{"frame": 0, "detections": [{"class": "Scalpel", "confidence": 0.5, "bbox": [0, 0, 1, 1]}]}"#,
    )
    .unwrap();
    let out = skillgauge(&["eval-detect", "--pred", "pred.jsonl", "--gt", "gt.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("pred.jsonl:1:") && stderr.contains("Scalpel"), "{stderr}");
}

#[test]
fn eval_segment_identical_and_mismatched() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.txt"), "G0\nG0\nG1\nG6\nG6\n").unwrap();
    fs::write(dir.path().join("b.txt"), "G0\nG0\nG1\nG6\n").unwrap();
    let out = skillgauge(&["eval-segment", "--pred", "a.txt", "--gt", "a.txt", "--csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let micro = &report(dir.path())["segmentation"]["scores"]["micro"];
    assert_eq!(micro["accuracy"], 100.0);
    assert_eq!(micro["edit"], 100.0);
    assert_eq!(micro["f1"]["50"], 100.0);
    let csv = fs::read_to_string(dir.path().join("skillgauge_report.csv")).unwrap();
    assert!(csv.starts_with("video,F1@10,F1@25,F1@50,Edit,Acc\n"));

    let out = skillgauge(&["eval-segment", "--pred", "a.txt", "--gt", "b.txt"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = skillgauge(&["eval-segment", "--pred", "a.txt", "--gt", "a.txt", "--gt", "b.txt"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn hand_tie_needs_fascia_profile() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.txt"), "G7\nG7\n").unwrap();
    let out = skillgauge(&["eval-segment", "--pred", "a.txt", "--gt", "a.txt"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = skillgauge(&["eval-segment", "--pred", "a.txt", "--gt", "a.txt", "--profile", "fascia"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn compare_exact_and_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let out = skillgauge(&["compare", "--expert", "1,2,3", "--resident", "4,5,6"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stat = &report(dir.path())["statistics"][0];
    assert_eq!(stat["p"], 0.1);
    assert_eq!(stat["method"], "Exact");

    let out = skillgauge(&["compare", "--expert", "2,2", "--resident", "2,2,2"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let out = skillgauge(&["compare", "--expert", "1,x", "--resident", "2"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn depth2gray_fixed_range() {
    let dir = tempfile::tempdir().unwrap();
    let depth = dir.path().join("seq");
    fs::create_dir_all(&depth).unwrap();
    fs::write(depth.join("meta.json"), r#"{"width": 4, "height": 1, "depth_scale": 0.001}"#).unwrap();
    fs::write(depth.join(frame_file_name(0)), pgm::encode_u16(4, 1, &[0, 500, 1000, 1500])).unwrap();
    let out = skillgauge(&["depth2gray", "seq", "--near", "0.5", "--far", "1.5"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let img = pgm::decode(&fs::read(dir.path().join("seq_gray").join(frame_file_name(0))).unwrap()).unwrap();
    assert_eq!(img.maxval, 255);
    assert_eq!(img.samples, vec![0, 255, 128, 0]);
    let r = report(dir.path());
    assert_eq!(r["depth2gray"]["frames"], 1);
    assert!(r["notes"][0].as_str().unwrap().contains("fps"));
}

#[test]
fn unwritable_output_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    // a regular file where the output directory should be
    fs::write(dir.path().join("blocker"), "").unwrap();
    let out = skillgauge(
        &["compare", "--expert", "1,2", "--resident", "3,4", "--out", "blocker/report.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

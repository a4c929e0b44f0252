mod common;

use std::fs;
use std::path::Path;

use skillgauge_core::eval_detect::DetectionEvalConfig;
use skillgauge_core::eval_segment::SegmentEvalOptions;
use skillgauge_core::geometry;
use skillgauge_core::ingest::{self, pgm, GestureLabel, IngestError, ObjectClass, TaskProfile};
use skillgauge_core::pipeline::{self, MotionOptions, PipelineError};

use common::{write_cohort, CohortSpec};

fn small_cohort(root: &Path) -> (ingest::GroupManifest, MotionOptions) {
    let cohort = write_cohort(
        root,
        CohortSpec {
            experts: 2,
            residents: 3,
            frames: 40,
            seed: 11,
        },
    );
    let manifest = ingest::load_manifest(&cohort.manifest).unwrap();
    let intr = ingest::load_intrinsics(&cohort.intrinsics).unwrap();
    (manifest, MotionOptions::new(intr))
}

#[test]
fn gesture_distances_add_up_to_path_length() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, opts) = small_cohort(dir.path());
    let paths = pipeline::run_path3d(&manifest, &opts).unwrap();
    let gestures = pipeline::run_gesture_dist(&manifest, &opts).unwrap();
    assert_eq!(paths.participants.len(), 5);
    for (p, g) in paths.participants.iter().zip(&gestures.participants) {
        assert_eq!(p.participant, g.participant);
        let total = p.path.as_ref().unwrap().combined.length_3d;
        let parts: f64 = g.gestures.as_ref().unwrap().combined.values().map(|d| d.distance).sum();
        assert!((total - parts).abs() <= 1e-9 * total, "{}: {total} vs {parts}", p.participant);
    }
    // labels cycle G0..G6 over 40 frames, so only G0..G3 occur
    let metrics: Vec<&str> = gestures.statistics.iter().map(|s| s.metric.as_str()).collect();
    assert_eq!(
        metrics,
        [
            "gesture_distance:G0",
            "gesture_distance:G1",
            "gesture_distance:G2",
            "gesture_distance:G3"
        ]
    );
}

#[test]
fn project2d_compares_every_plane() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, opts) = small_cohort(dir.path());
    let report = pipeline::run_project2d(&manifest, &opts).unwrap();
    let metrics: Vec<&str> = report.statistics.iter().map(|s| s.metric.as_str()).collect();
    assert_eq!(metrics, ["path_length_3d", "path_length_xy", "path_length_yz", "path_length_xz"]);
    for p in &report.participants {
        let c = &p.path.as_ref().unwrap().combined;
        assert!(c.length_xy <= c.length_3d && c.length_yz <= c.length_3d && c.length_xz <= c.length_3d);
    }
    let csv = report.to_csv().unwrap();
    assert!(csv.starts_with("task,XYZ_expert_mean,XYZ_expert_std,XYZ_resident_mean"));
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn distractor_box_is_never_chosen() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, opts) = small_cohort(dir.path());
    let entry = &manifest.entries()[0];
    let seq = ingest::load_depth_sequence(&entry.depth_dir, &entry.meta_path()).unwrap();
    let dets = ingest::load_detections(&entry.detections).unwrap();
    let left = geometry::build_trajectory(seq.frames(), &dets, ObjectClass::LeftHand, &opts.intrinsics, 5).unwrap();
    assert_eq!(left.samples().len(), 40);
    for s in left.samples() {
        // the distractor sits in the image corner, far up and to the left
        assert!(s.point.x < -0.08 && s.point.y.abs() < 0.05, "{:?}", s.point);
        assert!((s.point.z - 0.70).abs() < 0.02);
    }
    let mut dump = Vec::new();
    left.write_jsonl(&mut dump).unwrap();
    let first: serde_json::Value = serde_json::from_slice(dump.split(|b| *b == b'\n').next().unwrap()).unwrap();
    assert_eq!(first["frame"], 0);
    assert_eq!(first["hand"], "Left Hand");
    assert_eq!(first["xyz"].as_array().unwrap().len(), 3);
}

#[test]
fn jobs_do_not_change_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, opts) = small_cohort(dir.path());
    let one = pipeline::run_gesture_dist(&manifest, &opts).unwrap();
    let many = pipeline::run_gesture_dist(&manifest, &MotionOptions { jobs: 3, ..opts }).unwrap();
    assert_eq!(one.to_json(), many.to_json());
}

#[test]
fn validate_counts_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, opts) = small_cohort(dir.path());
    let report = pipeline::run_validate(&manifest, Some(&opts.intrinsics), 2).unwrap();
    assert_eq!(report.participants.len(), 5);
    assert!(report.participants.iter().all(|p| p.frames == 40 && p.labels == Some(40)));
}

#[test]
fn depth_scale_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, mut opts) = small_cohort(dir.path());
    opts.intrinsics.depth_scale = 0.0001;
    let err = pipeline::run_path3d(&manifest, &opts).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("E00"), "{err}");
}

#[test]
fn depth2gray_writes_eight_bit_frames() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = small_cohort(dir.path());
    let entry = &manifest.entries()[0];
    let out = dir.path().join("gray");
    let report = pipeline::run_depth2gray(&entry.depth_dir, &entry.meta_path(), &out, None).unwrap();
    let export = report.depth2gray.as_ref().unwrap();
    assert_eq!(export.frames, 40);
    let img = pgm::decode(&fs::read(out.join("frame_000000.pgm")).unwrap()).unwrap();
    assert_eq!((img.width, img.height, img.maxval), (160, 120, 255));
    // hands are nearer than the table, so brighter
    assert!(img.samples.contains(&255));
    assert!(img.samples.contains(&0));
}

fn write_sequence(dir: &Path, frames: &[(usize, Vec<u8>)], meta: &str) {
    fs::create_dir_all(dir).unwrap();
    fs::write(dir.join("meta.json"), meta).unwrap();
    for (i, bytes) in frames {
        fs::write(dir.join(ingest::frame_file_name(*i)), bytes).unwrap();
    }
}

const META_2X2: &str = r#"{"width": 2, "height": 2, "depth_scale": 0.001}"#;

#[test]
fn missing_frame_is_a_gap_error() {
    let dir = tempfile::tempdir().unwrap();
    let frame = pgm::encode_u16(2, 2, &[1, 2, 3, 4]);
    write_sequence(dir.path(), &[(0, frame.clone()), (2, frame)], META_2X2);
    let err = ingest::load_depth_sequence(dir.path(), &dir.path().join("meta.json")).unwrap_err();
    assert!(matches!(err, IngestError::Gap { ref missing } if missing == &[1]), "{err}");
}

#[test]
fn eight_bit_depth_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    write_sequence(dir.path(), &[(0, pgm::encode_u8(2, 2, &[1, 2, 3, 4]))], META_2X2);
    let err = ingest::load_depth_sequence(dir.path(), &dir.path().join("meta.json")).unwrap_err();
    assert!(matches!(err, IngestError::Format(_)), "{err}");
}

#[test]
fn frame_size_must_match_meta() {
    let dir = tempfile::tempdir().unwrap();
    write_sequence(dir.path(), &[(0, pgm::encode_u16(3, 1, &[1, 2, 3]))], META_2X2);
    let err = ingest::load_depth_sequence(dir.path(), &dir.path().join("meta.json")).unwrap_err();
    assert!(matches!(err, IngestError::Format(_)), "{err}");
}

#[test]
fn sequence_reads_big_endian_samples_and_defaults_fps() {
    let dir = tempfile::tempdir().unwrap();
    write_sequence(dir.path(), &[(0, pgm::encode_u16(2, 2, &[0, 258, 1000, 65535]))], META_2X2);
    let seq = ingest::load_depth_sequence(dir.path(), &dir.path().join("meta.json")).unwrap();
    assert!(seq.meta().fps_defaulted());
    let frame = seq.frame(0).unwrap();
    assert_eq!(frame.values, vec![0, 258, 1000, 65535]);
    assert_eq!(frame.at(1, 0), 258);
}

#[test]
fn eval_segment_over_files() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, labels: &[(GestureLabel, usize)]| {
        let text: String = labels
            .iter()
            .flat_map(|(g, n)| std::iter::repeat_n(format!("{g}\n"), *n))
            .collect();
        let path = dir.path().join(name);
        fs::write(&path, text).unwrap();
        path
    };
    use GestureLabel::*;
    let gt = write("gt.txt", &[(G0, 10), (G1, 10), (G6, 10), (G2, 10)]);
    let pred = write("pred.txt", &[(G0, 10), (G1, 15), (G6, 5), (G2, 10)]);
    let report =
        pipeline::run_eval_segment(&[(pred.clone(), gt.clone())], TaskProfile::SuturePad, SegmentEvalOptions::default())
            .unwrap();
    let scores = &report.segmentation.as_ref().unwrap().scores;
    // 35 of 40 frames agree; the segment orders are identical
    assert_eq!(scores.micro.accuracy, 87.5);
    assert_eq!(scores.micro.edit, 100.0);
    // G1: 10/15 overlap; G6: 5/10 overlap
    assert_eq!(scores.micro.f1[&10], 100.0);
    assert_eq!(scores.micro.f1[&25], 100.0);
    assert_eq!(scores.micro.f1[&50], 100.0);

    let shorter = write("short.txt", &[(G0, 39)]);
    let err = pipeline::run_eval_segment(&[(shorter, gt)], TaskProfile::SuturePad, SegmentEvalOptions::default())
        .unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn eval_detect_perfect_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, _) = small_cohort(dir.path());
    let dets = &manifest.entries()[0].detections;
    // the same file as ground truth; its distractor boxes become GT too
    let report = pipeline::run_eval_detect(dets, dets, &DetectionEvalConfig::default(), None).unwrap();
    let table = &report.detection.as_ref().unwrap().table;
    assert_eq!(table.map_50_95, 1.0);
    assert_eq!(table.classes.iter().filter(|c| c.ap_50_95.is_some()).count(), 2);
    assert_eq!(report.notes.len(), 1);
}

#[test]
fn degenerate_comparison_exits_with_three() {
    let err = pipeline::run_compare(vec![1.0, 1.0], vec![1.0, 1.0, 1.0], 0.05, Default::default()).unwrap_err();
    assert!(matches!(err, PipelineError::Stats(_)));
    assert_eq!(err.exit_code(), 3);
}

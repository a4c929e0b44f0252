//! End-to-end analyses behind each CLI subcommand. Every `run_*` function
//! returns a complete [`MetricReport`]; nothing is written unless the whole
//! analysis succeeded.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use rayon::prelude::*;

use crate::eval_detect::{self, DetectEvalError, DetectionEvalConfig};
use crate::eval_segment::{self, SegmentEvalError, SegmentEvalOptions};
use crate::geometry::{self, GeometryError, Trajectory3D};
use crate::ingest::{
    self, frame_file_name, CameraIntrinsics, DetectionSet, GestureLabel, GroupManifest, IngestError,
    LabelSequence, ManifestEntry, ObjectClass, SkillGroup, TaskProfile,
};
use crate::motion::{self, GapPolicy, GestureDistanceReport, MotionError, PathReport};
use crate::report::{
    ClassSweep, DetectionSection, GrayExport, GroupComparison, MetricReport, ParticipantResult, ReportConfig,
    SegmentationSection, GESTURE_METRIC_PREFIX, METRIC_LENGTH_3D, METRIC_LENGTH_XY, METRIC_LENGTH_XZ,
    METRIC_LENGTH_YZ,
};
use crate::stats::{self, MethodChoice, SampleGroup, StatsError};
use crate::viz::{self, GrayscaleMapping, VizError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    DetectEval(#[from] DetectEvalError),
    #[error(transparent)]
    SegmentEval(#[from] SegmentEvalError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Viz(#[from] VizError),
    #[error("participant {participant} (task {task}): {source}")]
    Participant {
        participant: String,
        task: String,
        #[source]
        source: Box<PipelineError>,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// 2 for bad input, 3 for degenerate statistics, 1 when writing
    /// results failed.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Participant { source, .. } => source.exit_code(),
            PipelineError::Stats(StatsError::Degenerate(_)) => 3,
            PipelineError::Geometry(GeometryError::Ingest(_)) => 2,
            PipelineError::Output { .. } => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// Settings shared by the trajectory-based commands.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionOptions {
    pub intrinsics: CameraIntrinsics,
    pub gap_policy: GapPolicy,
    pub window: usize,
    /// Optional moving-average window over positions; off by default.
    pub smoothing_window: Option<usize>,
    pub jobs: usize,
    pub alpha: f64,
    pub method: MethodChoice,
}

impl MotionOptions {
    pub fn new(intrinsics: CameraIntrinsics) -> Self {
        MotionOptions {
            intrinsics,
            gap_policy: GapPolicy::Bridge,
            window: geometry::DEFAULT_WINDOW,
            smoothing_window: None,
            jobs: 1,
            alpha: stats::DEFAULT_ALPHA,
            method: MethodChoice::Auto,
        }
    }

    fn config(&self) -> ReportConfig {
        ReportConfig {
            intrinsics: Some(self.intrinsics),
            gap_policy: Some(self.gap_policy),
            window: Some(self.window),
            smoothing_window: self.smoothing_window,
            alpha: Some(self.alpha),
            test_method: Some(self.method),
            ..ReportConfig::default()
        }
    }
}

struct LoadedParticipant {
    result: ParticipantResult,
    left: Trajectory3D,
    right: Trajectory3D,
    labels: Option<LabelSequence>,
}

fn load_participant(entry: &ManifestEntry, opts: &MotionOptions, need_labels: bool) -> Result<LoadedParticipant> {
    let seq = ingest::load_depth_sequence(&entry.depth_dir, &entry.meta_path())?;
    let meta = seq.meta();
    if meta.depth_scale != opts.intrinsics.depth_scale {
        return Err(PipelineError::Validation(format!(
            "meta.json depth_scale {} disagrees with intrinsics depth_scale {}",
            meta.depth_scale, opts.intrinsics.depth_scale
        )));
    }
    let detections = ingest::load_detections(&entry.detections)?;
    let labels = match (&entry.labels, need_labels) {
        (Some(path), _) => Some(ingest::load_labels(path, entry.profile)?),
        (None, true) => {
            return Err(PipelineError::Validation("manifest entry has no labels file".into()));
        }
        (None, false) => None,
    };
    if let Some(l) = &labels {
        if l.len() != seq.len() {
            return Err(PipelineError::Validation(format!(
                "labels file has {} lines for {} frames",
                l.len(),
                seq.len()
            )));
        }
    }

    let mut trajs = geometry::build_trajectories(
        seq.frames(),
        &detections,
        &ObjectClass::HANDS,
        &opts.intrinsics,
        opts.window,
    )?;
    if let Some(w) = opts.smoothing_window {
        trajs = trajs
            .iter()
            .map(|t| motion::moving_average(t, w))
            .collect::<std::result::Result<_, _>>()?;
    }
    let right = trajs.pop().expect("two hands");
    let left = trajs.pop().expect("two hands");
    debug!(
        "{}: {} frames, left {} samples, right {} samples",
        entry.participant,
        seq.len(),
        left.samples().len(),
        right.samples().len()
    );
    Ok(LoadedParticipant {
        result: ParticipantResult {
            participant: entry.participant.clone(),
            group: entry.group,
            task: entry.task.clone(),
            frames: seq.len(),
            fps: Some(meta.fps()),
            fps_defaulted: meta.fps_defaulted(),
            path: None,
            gestures: None,
            detections: None,
            labels: None,
        },
        left,
        right,
        labels,
    })
}

/// Runs `f` for every manifest entry on up to `jobs` threads and returns the
/// results sorted by participant id (then task, then group).
fn for_each_participant<T, F>(manifest: &GroupManifest, jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&ManifestEntry) -> Result<T> + Sync,
{
    if manifest.is_empty() {
        return Err(PipelineError::Validation("manifest has no entries".into()));
    }
    let mut order: Vec<&ManifestEntry> = manifest.entries().iter().collect();
    order.sort_by(|a, b| (&a.participant, &a.task, a.group).cmp(&(&b.participant, &b.task, b.group)));

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| PipelineError::Validation(format!("thread pool: {e}")))?;
    let results: Vec<Result<T>> = pool.install(|| {
        order
            .par_iter()
            .map(|e| {
                f(e).map_err(|source| PipelineError::Participant {
                    participant: e.participant.clone(),
                    task: e.task.clone(),
                    source: Box::new(source),
                })
            })
            .collect()
    });
    results.into_iter().collect()
}

fn fps_notes(participants: &[ParticipantResult]) -> Option<String> {
    let defaulted: Vec<&str> = participants
        .iter()
        .filter(|p| p.fps_defaulted)
        .map(|p| p.participant.as_str())
        .collect();
    (!defaulted.is_empty()).then(|| {
        format!(
            "fps missing from meta.json, assumed {} for: {}",
            ingest::DEFAULT_FPS,
            defaulted.join(", ")
        )
    })
}

/// Rank-sum comparison of one metric within one task. Returns `None` (and
/// records a note) when a group has no values.
fn compare_groups(
    task: &str,
    metric: &str,
    values: &[(SkillGroup, f64)],
    alpha: f64,
    method: MethodChoice,
    notes: &mut Vec<String>,
) -> Result<Option<GroupComparison>> {
    let pick = |g: SkillGroup| -> Vec<f64> { values.iter().filter(|(vg, _)| *vg == g).map(|(_, v)| *v).collect() };
    let (expert, resident) = (pick(SkillGroup::Expert), pick(SkillGroup::Resident));
    if expert.is_empty() || resident.is_empty() {
        notes.push(format!(
            "task {task}, {metric}: comparison skipped ({} experts, {} residents)",
            expert.len(),
            resident.len()
        ));
        return Ok(None);
    }
    let a = SampleGroup::new("Expert", expert)?;
    let b = SampleGroup::new("Resident", resident)?;
    let test = stats::rank_sum_test(&a, &b, alpha, method).map_err(|e| match e {
        StatsError::Degenerate(msg) => StatsError::Degenerate(format!("task {task}, {metric}: {msg}")),
        other => other,
    })?;
    Ok(Some(GroupComparison {
        task: task.to_string(),
        metric: metric.to_string(),
        expert: stats::describe(&a),
        resident: stats::describe(&b),
        u: test.u_statistic,
        p: test.p_value,
        method: test.method,
        significant: test.significant,
    }))
}

fn path_metric(report: &PathReport, metric: &str) -> f64 {
    match metric {
        METRIC_LENGTH_XY => report.combined.length_xy,
        METRIC_LENGTH_YZ => report.combined.length_yz,
        METRIC_LENGTH_XZ => report.combined.length_xz,
        _ => report.combined.length_3d,
    }
}

fn run_paths(command: &str, metrics: &[&str], manifest: &GroupManifest, opts: &MotionOptions) -> Result<MetricReport> {
    let participants = for_each_participant(manifest, opts.jobs, |entry| {
        let loaded = load_participant(entry, opts, false)?;
        let path = PathReport::from_hands(&loaded.left, &loaded.right, opts.gap_policy)?;
        Ok(ParticipantResult {
            path: Some(path),
            ..loaded.result
        })
    })?;

    let mut report = MetricReport::new(command, opts.config());
    for task in manifest.tasks() {
        for metric in metrics {
            let values: Vec<(SkillGroup, f64)> = participants
                .iter()
                .filter(|p| p.task == task)
                .map(|p| (p.group, path_metric(p.path.as_ref().expect("path computed"), metric)))
                .collect();
            if let Some(c) = compare_groups(&task, metric, &values, opts.alpha, opts.method, &mut report.notes)? {
                info!("task {task} {metric}: p = {:.4} ({})", c.p, c.method);
                report.statistics.push(c);
            }
        }
    }
    report.notes.extend(fps_notes(&participants));
    report.participants = participants;
    Ok(report)
}

/// Total 3D hand path per participant and an expert-vs-resident test per task.
pub fn run_path3d(manifest: &GroupManifest, opts: &MotionOptions) -> Result<MetricReport> {
    run_paths("path3d", &[METRIC_LENGTH_3D], manifest, opts)
}

/// As [`run_path3d`], with XY, YZ and XZ projected lengths also compared.
pub fn run_project2d(manifest: &GroupManifest, opts: &MotionOptions) -> Result<MetricReport> {
    run_paths(
        "project2d",
        &[METRIC_LENGTH_3D, METRIC_LENGTH_XY, METRIC_LENGTH_YZ, METRIC_LENGTH_XZ],
        manifest,
        opts,
    )
}

/// Distance moved per gesture and one rank-sum test per gesture and task.
/// A participant contributes to a gesture's test only if the gesture occurs
/// in their labels.
pub fn run_gesture_dist(manifest: &GroupManifest, opts: &MotionOptions) -> Result<MetricReport> {
    let participants = for_each_participant(manifest, opts.jobs, |entry| {
        let loaded = load_participant(entry, opts, true)?;
        let labels = loaded.labels.as_ref().expect("labels required");
        let gestures = GestureDistanceReport::from_hands(&loaded.left, &loaded.right, labels, opts.gap_policy)?;
        Ok(ParticipantResult {
            gestures: Some(gestures),
            labels: Some(labels.len()),
            ..loaded.result
        })
    })?;

    let mut report = MetricReport::new("gesture-dist", opts.config());
    for task in manifest.tasks() {
        let in_task: Vec<&ParticipantResult> = participants.iter().filter(|p| p.task == task).collect();
        let gestures: BTreeSet<GestureLabel> = in_task
            .iter()
            .flat_map(|p| p.gestures.as_ref().expect("gestures computed").combined.keys().copied())
            .collect();
        for g in gestures {
            let values: Vec<(SkillGroup, f64)> = in_task
                .iter()
                .filter_map(|p| {
                    let d = p.gestures.as_ref()?.combined.get(&g)?;
                    Some((p.group, d.distance))
                })
                .collect();
            let metric = format!("{GESTURE_METRIC_PREFIX}{g}");
            if let Some(c) = compare_groups(&task, &metric, &values, opts.alpha, opts.method, &mut report.notes)? {
                report.statistics.push(c);
            }
        }
    }
    report.notes.extend(fps_notes(&participants));
    report.participants = participants;
    Ok(report)
}

/// Per-class AP table for a prediction file against ground truth.
pub fn run_eval_detect(
    pred_path: &Path,
    gt_path: &Path,
    config: &DetectionEvalConfig,
    confidence_sweep: Option<&[f64]>,
) -> Result<MetricReport> {
    let preds = ingest::load_detections(pred_path)?;
    let gts = ingest::load_ground_truth(gt_path)?;
    eval_detect_sets(&preds, &gts, config, confidence_sweep)
}

pub fn eval_detect_sets(
    preds: &DetectionSet,
    gts: &DetectionSet,
    config: &DetectionEvalConfig,
    confidence_sweep: Option<&[f64]>,
) -> Result<MetricReport> {
    let table = eval_detect::map_50_95(preds, gts, config)?;
    let mut sweeps = Vec::new();
    if let Some(thresholds) = confidence_sweep {
        let (dets, truth): (Vec<_>, Vec<_>) = (preds.iter().copied().collect(), gts.iter().copied().collect());
        let iou_t = config.iou_thresholds[0];
        for &class in &config.classes {
            if let Some(points) = eval_detect::confidence_sweep(&dets, &truth, class, iou_t, thresholds) {
                sweeps.push(ClassSweep {
                    class,
                    iou_threshold: iou_t,
                    points,
                });
            }
        }
    }
    let mut report = MetricReport::new(
        "eval-detect",
        ReportConfig {
            iou_thresholds: Some(config.iou_thresholds.clone()),
            classes: Some(config.classes.clone()),
            ..ReportConfig::default()
        },
    );
    let missing: Vec<String> = table
        .classes
        .iter()
        .filter(|c| c.ap_50_95.is_none())
        .map(|c| c.class.to_string())
        .collect();
    if !missing.is_empty() {
        report.notes.push(format!(
            "no ground truth for {}; excluded from mAP",
            missing.join(", ")
        ));
    }
    report.detection = Some(DetectionSection {
        table,
        confidence_sweep: sweeps,
    });
    Ok(report)
}

/// Segmentation scores for (prediction, ground truth) label-file pairs.
pub fn run_eval_segment(pairs: &[(PathBuf, PathBuf)], profile: TaskProfile, opts: SegmentEvalOptions) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(PipelineError::Validation("no label files given".into()));
    }
    let loaded: Vec<(LabelSequence, LabelSequence)> = pairs
        .iter()
        .map(|(pred, gt)| Ok((ingest::load_labels(gt, profile)?, ingest::load_labels(pred, profile)?)))
        .collect::<Result<_>>()?;
    let names = pairs
        .iter()
        .map(|(pred, _)| {
            pred.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| pred.display().to_string())
        })
        .collect();
    let scores = eval_segment::score_split(&loaded, opts)?;
    let mut report = MetricReport::new(
        "eval-segment",
        ReportConfig {
            profile: Some(profile),
            exclude_background: Some(opts.exclude_background),
            ..ReportConfig::default()
        },
    );
    report.segmentation = Some(SegmentationSection { videos: names, scores });
    Ok(report)
}

/// Rank-sum test over two externally supplied value lists.
pub fn run_compare(expert: Vec<f64>, resident: Vec<f64>, alpha: f64, method: MethodChoice) -> Result<MetricReport> {
    let mut values: Vec<(SkillGroup, f64)> = expert.into_iter().map(|v| (SkillGroup::Expert, v)).collect();
    values.extend(resident.into_iter().map(|v| (SkillGroup::Resident, v)));
    let mut report = MetricReport::new(
        "compare",
        ReportConfig {
            alpha: Some(alpha),
            test_method: Some(method),
            ..ReportConfig::default()
        },
    );
    let c = compare_groups("external", "value", &values, alpha, method, &mut report.notes)?
        .ok_or_else(|| PipelineError::Validation("both groups need at least one value".into()))?;
    report.statistics.push(c);
    Ok(report)
}

/// Writes one 8-bit PGM per depth frame into `out_dir`. The gray range is
/// either given or frozen from the first frame's 1st/99th percentiles.
pub fn run_depth2gray(
    dir: &Path,
    meta_path: &Path,
    out_dir: &Path,
    mapping: Option<GrayscaleMapping>,
) -> Result<MetricReport> {
    let seq = ingest::load_depth_sequence(dir, meta_path)?;
    let scale = seq.meta().depth_scale;
    let (mapping, normalization) = match mapping {
        Some(m) => (m, "fixed range given on the command line"),
        None => (
            GrayscaleMapping::from_percentiles(&seq.frame(0)?, scale)?,
            "per-video: 1st/99th percentile of the first frame, frozen for all frames",
        ),
    };
    fs::create_dir_all(out_dir).map_err(|source| PipelineError::Output {
        path: out_dir.to_path_buf(),
        source,
    })?;
    for frame in seq.frames() {
        let frame = frame?;
        let img = viz::depth_to_gray(&frame, &mapping, scale);
        let path = out_dir.join(frame_file_name(frame.index));
        fs::write(&path, ingest::pgm::encode_u8(img.width, img.height, &img.pixels))
            .map_err(|source| PipelineError::Output { path, source })?;
    }
    let mut report = MetricReport::new(
        "depth2gray",
        ReportConfig {
            near: Some(mapping.near()),
            far: Some(mapping.far()),
            ..ReportConfig::default()
        },
    );
    report.depth2gray = Some(GrayExport {
        output_dir: out_dir.display().to_string(),
        frames: seq.len(),
        near: mapping.near(),
        far: mapping.far(),
        normalization: normalization.to_string(),
    });
    if seq.meta().fps_defaulted() {
        report.notes.push(format!("fps missing from meta.json, assumed {}", ingest::DEFAULT_FPS));
    }
    Ok(report)
}

/// Loads every input named by the manifest without computing metrics.
pub fn run_validate(manifest: &GroupManifest, intrinsics: Option<&CameraIntrinsics>, jobs: usize) -> Result<MetricReport> {
    let participants = for_each_participant(manifest, jobs, |entry| {
        let seq = ingest::load_depth_sequence(&entry.depth_dir, &entry.meta_path())?;
        // decoding every frame also validates the rasters
        let mut first = None;
        for frame in seq.frames() {
            let frame = frame?;
            first.get_or_insert((frame.width, frame.height));
        }
        if let (Some(intr), Some((w, h))) = (intrinsics, first) {
            intr.check_image(w, h)?;
        }
        let detections = ingest::load_detections(&entry.detections)?;
        if let Some(max) = detections.max_frame() {
            if max >= seq.len() {
                return Err(GeometryError::UnknownFrame {
                    frame: max,
                    frame_count: seq.len(),
                }
                .into());
            }
        }
        let labels = match &entry.labels {
            Some(path) => {
                let l = ingest::load_labels(path, entry.profile)?;
                if l.len() != seq.len() {
                    return Err(PipelineError::Validation(format!(
                        "labels file has {} lines for {} frames",
                        l.len(),
                        seq.len()
                    )));
                }
                Some(l.len())
            }
            None => None,
        };
        Ok(ParticipantResult {
            participant: entry.participant.clone(),
            group: entry.group,
            task: entry.task.clone(),
            frames: seq.len(),
            fps: Some(seq.meta().fps()),
            fps_defaulted: seq.meta().fps_defaulted(),
            path: None,
            gestures: None,
            detections: Some(detections.len()),
            labels,
        })
    })?;
    let mut report = MetricReport::new(
        "validate",
        ReportConfig {
            intrinsics: intrinsics.copied(),
            ..ReportConfig::default()
        },
    );
    if participants.iter().all(|p| p.detections == Some(0)) {
        warn!("no participant has any detection");
    }
    report.notes.extend(fps_notes(&participants));
    report.participants = participants;
    Ok(report)
}

/// Writes the JSON report to `out` (and `out` with a `.csv` extension when
/// `csv` is set). Files are written to a temporary name first so a failed
/// run never leaves a partial report behind.
pub fn write_report(report: &MetricReport, out: &Path, csv: bool) -> Result<()> {
    let write_atomic = |path: &Path, contents: &str| -> Result<()> {
        let tmp = path.with_extension("partial");
        fs::write(&tmp, contents)
            .and_then(|_| fs::rename(&tmp, path))
            .map_err(|source| PipelineError::Output {
                path: path.to_path_buf(),
                source,
            })
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| PipelineError::Output {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    let csv_text = if csv { report.to_csv() } else { None };
    write_atomic(out, &report.to_json())?;
    if let Some(text) = csv_text {
        write_atomic(&out.with_extension("csv"), &text)?;
    }
    Ok(())
}

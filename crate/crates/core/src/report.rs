//! The `MetricReport` document written by every command, its canonical JSON
//! encoding and the table-shaped CSV side outputs.
//!
//! JSON output is canonical: object keys are sorted and every float is
//! rounded to six significant digits, so identical inputs give identical
//! bytes.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

use crate::eval_detect::{ApTable, ConfidencePoint};
use crate::eval_segment::{SplitScore, SEGMENT_CSV_HEADER};
use crate::ingest::{CameraIntrinsics, GestureLabel, ObjectClass, SkillGroup, TaskProfile};
use crate::motion::{GapPolicy, GestureDistanceReport, PathReport};
use crate::stats::{Description, MethodChoice, TestMethod};

/// Bumped on any breaking change to the report layout.
pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Echo of every setting that influenced the numbers in a report.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReportConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intrinsics: Option<CameraIntrinsics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_policy: Option<GapPolicy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smoothing_window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_method: Option<MethodChoice>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iou_thresholds: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<ObjectClass>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<TaskProfile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exclude_background: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub near: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub far: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticipantResult {
    pub participant: String,
    pub group: SkillGroup,
    pub task: String,
    pub frames: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub fps_defaulted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gestures: Option<GestureDistanceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detections: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<usize>,
}

/// Expert-vs-resident rank-sum comparison of one metric within one task.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupComparison {
    pub task: String,
    pub metric: String,
    pub expert: Description,
    pub resident: Description,
    pub u: f64,
    pub p: f64,
    pub method: TestMethod,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassSweep {
    pub class: ObjectClass,
    pub iou_threshold: f64,
    pub points: Vec<ConfidencePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionSection {
    pub table: ApTable,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub confidence_sweep: Vec<ClassSweep>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentationSection {
    pub videos: Vec<String>,
    pub scores: SplitScore,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrayExport {
    pub output_dir: String,
    pub frames: usize,
    pub near: f64,
    pub far: f64,
    pub normalization: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub config: ReportConfig,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub participants: Vec<ParticipantResult>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub statistics: Vec<GroupComparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<SegmentationSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth2gray: Option<GrayExport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl MetricReport {
    pub fn new(command: impl Into<String>, config: ReportConfig) -> Self {
        MetricReport {
            schema_version: SCHEMA_VERSION,
            tool_version: TOOL_VERSION.to_string(),
            command: command.into(),
            config,
            participants: Vec::new(),
            statistics: Vec::new(),
            detection: None,
            segmentation: None,
            depth2gray: None,
            notes: Vec::new(),
        }
    }

    /// Canonical JSON text, newline-terminated.
    pub fn to_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("report serializes");
        round_floats(&mut value);
        let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
        text.push('\n');
        text
    }

    /// The table-shaped CSV for this report's command, if it has one.
    pub fn to_csv(&self) -> Option<String> {
        match self.command.as_str() {
            "path3d" | "project2d" => Some(self.path_csv()),
            "gesture-dist" => Some(self.gesture_csv()),
            "eval-detect" => self.detection.as_ref().map(|d| {
                let mut buf = Vec::new();
                d.table.write_csv(&mut buf).expect("write to Vec");
                String::from_utf8(buf).expect("ascii csv")
            }),
            "eval-segment" => self.segmentation.as_ref().map(segment_csv),
            "compare" => Some(self.comparison_csv()),
            _ => None,
        }
    }

    fn comparisons_csv_rows(&self, out: &mut String) {
        for c in &self.statistics {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                csv_field(&c.task),
                csv_field(&c.metric),
                fmt6(c.expert.mean),
                fmt6(c.expert.std),
                c.expert.n,
                fmt6(c.resident.mean),
                fmt6(c.resident.std),
                c.resident.n,
                fmt6(c.u),
                fmt6(c.p),
                c.method,
                c.significant
            )
            .unwrap();
        }
    }

    fn comparison_csv(&self) -> String {
        let mut out = String::from(COMPARISON_CSV_HEADER);
        out.push('\n');
        self.comparisons_csv_rows(&mut out);
        out
    }

    /// One row per task, mean and std per group for each of XYZ, XY, YZ, XZ
    /// (combined hands), followed by the 3D rank-sum p-value.
    fn path_csv(&self) -> String {
        let mut out = String::from("task");
        for plane in ["XYZ", "XY", "YZ", "XZ"] {
            for g in ["expert", "resident"] {
                write!(out, ",{plane}_{g}_mean,{plane}_{g}_std").unwrap();
            }
        }
        out.push_str(",p_XYZ\n");
        let mut tasks: Vec<&str> = self.participants.iter().map(|p| p.task.as_str()).collect();
        tasks.sort();
        tasks.dedup();
        for task in tasks {
            write!(out, "{}", csv_field(task)).unwrap();
            let lengths = |group: SkillGroup, pick: fn(&PathReport) -> f64| -> Vec<f64> {
                self.participants
                    .iter()
                    .filter(|p| p.task == task && p.group == group)
                    .filter_map(|p| p.path.as_ref().map(pick))
                    .collect()
            };
            let pickers: [fn(&PathReport) -> f64; 4] = [
                |r| r.combined.length_3d,
                |r| r.combined.length_xy,
                |r| r.combined.length_yz,
                |r| r.combined.length_xz,
            ];
            for pick in pickers {
                for group in [SkillGroup::Expert, SkillGroup::Resident] {
                    let v = lengths(group, pick);
                    if v.is_empty() {
                        out.push_str(",,");
                    } else {
                        let d = describe_values(&v);
                        write!(out, ",{},{}", fmt6(d.mean), fmt6(d.std)).unwrap();
                    }
                }
            }
            let p = self
                .statistics
                .iter()
                .find(|c| c.task == task && c.metric == METRIC_LENGTH_3D)
                .map(|c| fmt6(c.p))
                .unwrap_or_default();
            writeln!(out, ",{p}").unwrap();
        }
        out
    }

    fn gesture_csv(&self) -> String {
        let mut out = String::from(COMPARISON_CSV_HEADER);
        out.push_str(",gesture_name\n");
        let before = out.len();
        self.comparisons_csv_rows(&mut out);
        // append the display name to each row
        let rows: Vec<String> = out[before..]
            .lines()
            .zip(&self.statistics)
            .map(|(line, c)| {
                let name = c
                    .metric
                    .strip_prefix(GESTURE_METRIC_PREFIX)
                    .and_then(|code| code.parse::<GestureLabel>().ok())
                    .map(GestureLabel::display_name)
                    .unwrap_or("");
                format!("{line},{}\n", csv_field(name))
            })
            .collect();
        out.truncate(before);
        out.extend(rows);
        out
    }
}

pub const METRIC_LENGTH_3D: &str = "path_length_3d";
pub const METRIC_LENGTH_XY: &str = "path_length_xy";
pub const METRIC_LENGTH_YZ: &str = "path_length_yz";
pub const METRIC_LENGTH_XZ: &str = "path_length_xz";
pub const GESTURE_METRIC_PREFIX: &str = "gesture_distance:";

const COMPARISON_CSV_HEADER: &str =
    "task,metric,expert_mean,expert_std,expert_n,resident_mean,resident_std,resident_n,u,p,method,significant";

fn segment_csv(section: &SegmentationSection) -> String {
    let mut buf = Vec::new();
    use std::io::Write as _;
    writeln!(buf, "{SEGMENT_CSV_HEADER}").unwrap();
    for (name, v) in section.videos.iter().zip(&section.scores.videos) {
        v.score.write_csv_row(&mut buf, &csv_field(name)).unwrap();
    }
    section.scores.micro.write_csv_row(&mut buf, "micro").unwrap();
    section.scores.macro_.write_csv_row(&mut buf, "macro").unwrap();
    String::from_utf8(buf).expect("ascii csv")
}

fn describe_values(v: &[f64]) -> Description {
    let group = crate::stats::SampleGroup {
        name: String::new(),
        values: v.to_vec(),
    };
    crate::stats::describe(&group)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Rounds to six significant digits.
pub fn round6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

fn fmt6(x: f64) -> String {
    let r = round6(x);
    // shortest repr of the rounded value, without a trailing ".0"
    let s = format!("{r}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            if let Some(r) = serde_json::Number::from_f64(round6(x)) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

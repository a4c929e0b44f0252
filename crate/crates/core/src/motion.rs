//! Path-length analytics over hand trajectories: total 3D path, its
//! projections on the XY, YZ and XZ planes, and distance per gesture.
//!
//! Sums are always accumulated sequentially in frame order, so results are
//! bit-reproducible for a given input.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::{Point3, Trajectory3D};
use crate::ingest::{GestureLabel, LabelSequence};

#[derive(Debug, thiserror::Error)]
pub enum MotionError {
    #[error("trajectory has no samples")]
    EmptyInput,
    #[error("validation error: {0}")]
    Validation(String),
}

pub type Result<T> = std::result::Result<T, MotionError>;

/// What to do across frames without a valid position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapPolicy {
    /// Connect the last sample before a gap to the first one after it.
    #[default]
    Bridge,
    /// Contribute nothing across a gap.
    Skip,
}

impl fmt::Display for GapPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GapPolicy::Bridge => "bridge",
            GapPolicy::Skip => "skip",
        })
    }
}

impl FromStr for GapPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "bridge" => Ok(GapPolicy::Bridge),
            "skip" => Ok(GapPolicy::Skip),
            other => Err(format!("unknown gap policy {other:?} (expected bridge or skip)")),
        }
    }
}

/// Movement between two consecutive usable samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub from_frame: usize,
    pub to_frame: usize,
    pub delta: Point3,
    /// True when the step spans one or more gap frames.
    pub bridged: bool,
}

impl Step {
    pub fn length_3d(&self) -> f64 {
        let Point3 { x, y, z } = self.delta;
        (x * x + y * y + z * z).sqrt()
    }

    pub fn length_xy(&self) -> f64 {
        let Point3 { x, y, .. } = self.delta;
        (x * x + y * y).sqrt()
    }

    pub fn length_yz(&self) -> f64 {
        let Point3 { y, z, .. } = self.delta;
        (y * y + z * z).sqrt()
    }

    pub fn length_xz(&self) -> f64 {
        let Point3 { x, z, .. } = self.delta;
        (x * x + z * z).sqrt()
    }
}

/// Steps of `traj` under `policy`, in frame order.
pub fn steps(traj: &Trajectory3D, policy: GapPolicy) -> impl Iterator<Item = Step> + '_ {
    traj.samples().windows(2).filter_map(move |w| {
        let bridged = w[1].frame > w[0].frame + 1;
        if bridged && policy == GapPolicy::Skip {
            return None;
        }
        Some(Step {
            from_frame: w[0].frame,
            to_frame: w[1].frame,
            delta: w[1].point - w[0].point,
            bridged,
        })
    })
}

/// Path lengths of one trajectory (or a sum of several), in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PathLengths {
    pub length_3d: f64,
    pub length_xy: f64,
    pub length_yz: f64,
    pub length_xz: f64,
    pub frames_used: usize,
    pub gap_count: usize,
    pub gap_bridged_distance: f64,
}

impl PathLengths {
    fn sum(&self, o: &PathLengths) -> PathLengths {
        PathLengths {
            length_3d: self.length_3d + o.length_3d,
            length_xy: self.length_xy + o.length_xy,
            length_yz: self.length_yz + o.length_yz,
            length_xz: self.length_xz + o.length_xz,
            frames_used: self.frames_used + o.frames_used,
            gap_count: self.gap_count + o.gap_count,
            gap_bridged_distance: self.gap_bridged_distance + o.gap_bridged_distance,
        }
    }
}

pub fn path_length_3d(traj: &Trajectory3D, policy: GapPolicy) -> Result<PathLengths> {
    if traj.samples().is_empty() {
        return Err(MotionError::EmptyInput);
    }
    let mut out = PathLengths {
        frames_used: traj.samples().len(),
        gap_count: traj.gaps().len(),
        ..PathLengths::default()
    };
    for step in steps(traj, policy) {
        let d = step.length_3d();
        out.length_3d += d;
        out.length_xy += step.length_xy();
        out.length_yz += step.length_yz();
        out.length_xz += step.length_xz();
        if step.bridged {
            out.gap_bridged_distance += d;
        }
    }
    Ok(out)
}

/// `(length_xy, length_yz, length_xz)`: each plane drops one coordinate.
pub fn planar_lengths(traj: &Trajectory3D, policy: GapPolicy) -> Result<(f64, f64, f64)> {
    let p = path_length_3d(traj, policy)?;
    Ok((p.length_xy, p.length_yz, p.length_xz))
}

/// Per-hand path lengths plus their sum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathReport {
    pub left: PathLengths,
    pub right: PathLengths,
    pub combined: PathLengths,
}

impl PathReport {
    pub fn from_hands(left: &Trajectory3D, right: &Trajectory3D, policy: GapPolicy) -> Result<Self> {
        let left = path_length_3d(left, policy)?;
        let right = path_length_3d(right, policy)?;
        Ok(PathReport {
            combined: left.sum(&right),
            left,
            right,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct GestureDistance {
    pub distance: f64,
    pub step_count: usize,
}

/// Distance per gesture label. Every label that occurs in the label
/// sequence has an entry, even if no step was attributed to it.
pub type GestureDistances = BTreeMap<GestureLabel, GestureDistance>;

/// The step from frame `t` to the next usable sample is attributed to the
/// label at frame `t`.
pub fn gesture_distances(
    traj: &Trajectory3D,
    labels: &LabelSequence,
    policy: GapPolicy,
) -> Result<GestureDistances> {
    if labels.len() != traj.frame_count() {
        return Err(MotionError::Validation(format!(
            "{} labels for {} frames",
            labels.len(),
            traj.frame_count()
        )));
    }
    let mut out: GestureDistances = labels
        .labels()
        .iter()
        .map(|&g| (g, GestureDistance::default()))
        .collect();
    for step in steps(traj, policy) {
        let label = labels.labels()[step.from_frame];
        let slot = out.get_mut(&label).expect("every label is seeded");
        slot.distance += step.length_3d();
        slot.step_count += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GestureDistanceReport {
    pub left: GestureDistances,
    pub right: GestureDistances,
    pub combined: GestureDistances,
}

impl GestureDistanceReport {
    pub fn from_hands(
        left: &Trajectory3D,
        right: &Trajectory3D,
        labels: &LabelSequence,
        policy: GapPolicy,
    ) -> Result<Self> {
        let left = gesture_distances(left, labels, policy)?;
        let right = gesture_distances(right, labels, policy)?;
        let combined = left
            .iter()
            .map(|(g, l)| {
                let r = right[g];
                (
                    *g,
                    GestureDistance {
                        distance: l.distance + r.distance,
                        step_count: l.step_count + r.step_count,
                    },
                )
            })
            .collect();
        Ok(GestureDistanceReport {
            left,
            right,
            combined,
        })
    }
}

/// Centered moving average over each run of consecutive frames. Windows
/// are truncated at run boundaries and never reach across a gap.
pub fn moving_average(traj: &Trajectory3D, window: usize) -> Result<Trajectory3D> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(MotionError::Validation(format!(
            "smoothing window must be odd, got {window}"
        )));
    }
    let half = window / 2;
    let samples = traj.samples();
    let mut smoothed = Vec::with_capacity(samples.len());
    let mut run_start = 0;
    while run_start < samples.len() {
        let mut run_end = run_start + 1;
        while run_end < samples.len() && samples[run_end].frame == samples[run_end - 1].frame + 1 {
            run_end += 1;
        }
        for i in run_start..run_end {
            let lo = i.saturating_sub(half).max(run_start);
            let hi = (i + half + 1).min(run_end);
            let sum = samples[lo..hi]
                .iter()
                .fold(Point3::default(), |acc, s| acc + s.point);
            smoothed.push(sum * (1.0 / (hi - lo) as f64));
        }
        run_start = run_end;
    }
    Ok(traj.with_points(smoothed))
}

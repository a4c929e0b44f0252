//! Pixel + depth to metric camera-space positions, and per-hand trajectories.
//!
//! Camera axes follow the pinhole convention: x right, y down, z forward
//! along the optical axis. All positions are in meters.

use std::io::Write;
use std::ops::{Add, Mul, Sub};

use serde::Serialize;

use crate::ingest::{BoundingBox, CameraIntrinsics, DepthFrame, Detection, DetectionSet, IngestError, ObjectClass};

/// Default side of the square depth-sampling window around a box center.
pub const DEFAULT_WINDOW: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid depth {0} (no sensor return)")]
    InvalidDepth(f64),
    #[error("no frames to build a trajectory from")]
    EmptyInput,
    #[error("sampling window must be odd and at least 1, got {0}")]
    InvalidWindow(usize),
    #[error("{0} is not a hand class")]
    NotAHand(ObjectClass),
    #[error("detections reference frame {frame} but the sequence has {frame_count} frames")]
    UnknownFrame { frame: usize, frame_count: usize },
    #[error("frame {frame}: box {bbox:?} lies outside the {width}x{height} image")]
    BoxOutsideImage {
        frame: usize,
        bbox: [f64; 4],
        width: usize,
        height: usize,
    },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

impl From<std::convert::Infallible> for GeometryError {
    fn from(e: std::convert::Infallible) -> Self {
        match e {}
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, k: f64) -> Point3 {
        Point3::new(self.x * k, self.y * k, self.z * k)
    }
}

/// Inverse pinhole mapping. `depth_raw` is in device units (it may be
/// fractional when it comes from a median of two samples).
pub fn deproject(u: f64, v: f64, depth_raw: f64, intr: &CameraIntrinsics) -> Result<Point3> {
    if !(depth_raw.is_finite() && depth_raw > 0.0) {
        return Err(GeometryError::InvalidDepth(depth_raw));
    }
    let z = depth_raw * intr.depth_scale;
    Ok(Point3::new(
        (u - intr.cx) * z / intr.fx,
        (v - intr.cy) * z / intr.fy,
        z,
    ))
}

fn check_window(window: usize) -> Result<()> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(GeometryError::InvalidWindow(window));
    }
    Ok(())
}

/// Median of the nonzero samples in a `window`×`window` patch centered on
/// the pixel containing the box center, clipped to the image. `None` when
/// the patch holds no valid sample.
pub fn sample_depth_at(frame: &DepthFrame, bbox: &BoundingBox, window: usize) -> Result<Option<f64>> {
    check_window(window)?;
    let (cu, cv) = bbox.center();
    let clamp = |c: f64, len: usize| (c.floor().max(0.0) as usize).min(len - 1);
    let (px, py) = (clamp(cu, frame.width), clamp(cv, frame.height));
    let half = window / 2;
    let (x0, x1) = (px.saturating_sub(half), (px + half).min(frame.width - 1));
    let (y0, y1) = (py.saturating_sub(half), (py + half).min(frame.height - 1));

    let mut valid: Vec<u16> = (y0..=y1)
        .flat_map(|y| (x0..=x1).map(move |x| (x, y)))
        .map(|(x, y)| frame.at(x, y))
        .filter(|&d| d != 0)
        .collect();
    if valid.is_empty() {
        return Ok(None);
    }
    valid.sort_unstable();
    let n = valid.len();
    let median = if n % 2 == 1 {
        f64::from(valid[n / 2])
    } else {
        (f64::from(valid[n / 2 - 1]) + f64::from(valid[n / 2])) / 2.0
    };
    Ok(Some(median))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub frame: usize,
    pub point: Point3,
}

/// Time-ordered positions of one hand. Every frame of the source sequence
/// is either a sample or a gap, never both.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory3D {
    hand: ObjectClass,
    frame_count: usize,
    samples: Vec<TrajectorySample>,
    gaps: Vec<usize>,
}

impl Trajectory3D {
    /// Frames in `0..frame_count` without a sample become gaps.
    pub fn new(hand: ObjectClass, frame_count: usize, samples: Vec<TrajectorySample>) -> Result<Self> {
        if !hand.is_hand() {
            return Err(GeometryError::NotAHand(hand));
        }
        if samples.windows(2).any(|w| w[0].frame >= w[1].frame) {
            return Err(GeometryError::InvalidTrajectory(
                "sample frames must be strictly increasing".into(),
            ));
        }
        if let Some(s) = samples.last() {
            if s.frame >= frame_count {
                return Err(GeometryError::InvalidTrajectory(format!(
                    "sample at frame {} beyond frame count {frame_count}",
                    s.frame
                )));
            }
        }
        let mut gaps = Vec::with_capacity(frame_count - samples.len());
        let mut next = samples.iter().map(|s| s.frame).peekable();
        for f in 0..frame_count {
            if next.peek() == Some(&f) {
                next.next();
            } else {
                gaps.push(f);
            }
        }
        Ok(Trajectory3D {
            hand,
            frame_count,
            samples,
            gaps,
        })
    }

    /// Convenience for consecutive frames `0..points.len()` with no gaps.
    pub fn from_points(hand: ObjectClass, points: &[Point3]) -> Result<Self> {
        let samples = points
            .iter()
            .enumerate()
            .map(|(frame, &point)| TrajectorySample { frame, point })
            .collect();
        Trajectory3D::new(hand, points.len(), samples)
    }

    pub fn hand(&self) -> ObjectClass {
        self.hand
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn gaps(&self) -> &[usize] {
        &self.gaps
    }

    /// Same frames, new positions. Used by smoothing filters.
    pub(crate) fn with_points(&self, points: impl IntoIterator<Item = Point3>) -> Self {
        let samples: Vec<TrajectorySample> = self
            .samples
            .iter()
            .zip(points)
            .map(|(s, point)| TrajectorySample { frame: s.frame, point })
            .collect();
        debug_assert_eq!(samples.len(), self.samples.len());
        Trajectory3D {
            samples,
            ..self.clone()
        }
    }

    /// JSON Lines dump, one `{"frame","hand","xyz"}` record per sample.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            frame: usize,
            hand: &'a str,
            xyz: [f64; 3],
        }
        for s in &self.samples {
            serde_json::to_writer(
                &mut w,
                &Line {
                    frame: s.frame,
                    hand: self.hand.name(),
                    xyz: s.point.to_array(),
                },
            )?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Highest confidence wins; ties go to the larger box, then the lower x_min.
fn pick_detection<'a>(candidates: impl Iterator<Item = &'a Detection>) -> Option<&'a Detection> {
    candidates.reduce(|best, d| {
        let better = d
            .confidence
            .total_cmp(&best.confidence)
            .then(d.bbox.area().total_cmp(&best.bbox.area()))
            .then(best.bbox.x_min().total_cmp(&d.bbox.x_min()))
            .is_gt();
        if better {
            d
        } else {
            best
        }
    })
}

/// Builds one trajectory per requested hand in a single pass over `frames`.
pub fn build_trajectories<I, E>(
    frames: I,
    detections: &DetectionSet,
    hands: &[ObjectClass],
    intr: &CameraIntrinsics,
    window: usize,
) -> Result<Vec<Trajectory3D>>
where
    I: IntoIterator<Item = std::result::Result<DepthFrame, E>>,
    GeometryError: From<E>,
{
    check_window(window)?;
    if let Some(h) = hands.iter().find(|h| !h.is_hand()) {
        return Err(GeometryError::NotAHand(*h));
    }
    let mut samples: Vec<Vec<TrajectorySample>> = vec![Vec::new(); hands.len()];
    let mut frame_count = 0;
    for (expected, frame) in frames.into_iter().enumerate() {
        let frame = frame?;
        if frame.index != expected {
            return Err(GeometryError::InvalidTrajectory(format!(
                "frame stream out of order: got {} where {expected} was expected",
                frame.index
            )));
        }
        if expected == 0 {
            intr.check_image(frame.width, frame.height)?;
        }
        frame_count += 1;
        for (hand, out) in hands.iter().zip(samples.iter_mut()) {
            let dets = detections.frame(frame.index);
            let Some(det) = pick_detection(dets.iter().filter(|d| d.class == *hand)) else {
                continue;
            };
            if !det.bbox.intersects_image(frame.width, frame.height) {
                return Err(GeometryError::BoxOutsideImage {
                    frame: frame.index,
                    bbox: det.bbox.to_array(),
                    width: frame.width,
                    height: frame.height,
                });
            }
            if let Some(depth) = sample_depth_at(&frame, &det.bbox, window)? {
                let (u, v) = det.bbox.center();
                out.push(TrajectorySample {
                    frame: frame.index,
                    point: deproject(u, v, depth, intr)?,
                });
            }
        }
    }
    if frame_count == 0 {
        return Err(GeometryError::EmptyInput);
    }
    if let Some(max) = detections.max_frame() {
        if max >= frame_count {
            return Err(GeometryError::UnknownFrame {
                frame: max,
                frame_count,
            });
        }
    }
    hands
        .iter()
        .zip(samples)
        .map(|(hand, s)| Trajectory3D::new(*hand, frame_count, s))
        .collect()
}

pub fn build_trajectory<I, E>(
    frames: I,
    detections: &DetectionSet,
    hand: ObjectClass,
    intr: &CameraIntrinsics,
    window: usize,
) -> Result<Trajectory3D>
where
    I: IntoIterator<Item = std::result::Result<DepthFrame, E>>,
    GeometryError: From<E>,
{
    let mut out = build_trajectories(frames, detections, &[hand], intr, window)?;
    Ok(out.remove(0))
}

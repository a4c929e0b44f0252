use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{IngestError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObjectClass {
    LeftHand,
    RightHand,
    NeedleDriver,
    TissueForceps,
    DressingForceps,
    Scissors,
    Simulator,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 7] = [
        ObjectClass::LeftHand,
        ObjectClass::RightHand,
        ObjectClass::NeedleDriver,
        ObjectClass::TissueForceps,
        ObjectClass::DressingForceps,
        ObjectClass::Scissors,
        ObjectClass::Simulator,
    ];

    pub const HANDS: [ObjectClass; 2] = [ObjectClass::LeftHand, ObjectClass::RightHand];

    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::LeftHand => "Left Hand",
            ObjectClass::RightHand => "Right Hand",
            ObjectClass::NeedleDriver => "Needle Driver",
            ObjectClass::TissueForceps => "Tissue Forceps",
            ObjectClass::DressingForceps => "Dressing Forceps",
            ObjectClass::Scissors => "Scissors",
            ObjectClass::Simulator => "Simulator",
        }
    }

    pub fn is_hand(self) -> bool {
        matches!(self, ObjectClass::LeftHand | ObjectClass::RightHand)
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ObjectClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown class {s:?}"))
    }
}

impl Serialize for ObjectClass {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ObjectClass {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Axis-aligned box in continuous pixel coordinates, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(IngestError::Validation("bbox coordinates must be finite".into()));
        }
        if x_min >= x_max || y_min >= y_max {
            return Err(IngestError::Validation(format!(
                "inverted bbox [{x_min}, {y_min}, {x_max}, {y_max}]"
            )));
        }
        Ok(BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    pub fn intersects_image(&self, width: usize, height: usize) -> bool {
        self.x_max > 0.0 && self.y_max > 0.0 && self.x_min < width as f64 && self.y_min < height as f64
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub frame: usize,
    pub class: ObjectClass,
    /// Always 1.0 for ground truth.
    pub confidence: f64,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectionKind {
    Predictions,
    GroundTruth,
}

/// Boxes grouped by frame, frames ascending, boxes in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    kind: DetectionKind,
    by_frame: BTreeMap<usize, Vec<Detection>>,
}

impl DetectionSet {
    pub fn new(kind: DetectionKind) -> Self {
        DetectionSet {
            kind,
            by_frame: BTreeMap::new(),
        }
    }

    pub fn from_detections(kind: DetectionKind, dets: impl IntoIterator<Item = Detection>) -> Self {
        let mut set = DetectionSet::new(kind);
        for d in dets {
            set.push(d);
        }
        set
    }

    pub fn push(&mut self, mut det: Detection) {
        if self.kind == DetectionKind::GroundTruth {
            det.confidence = 1.0;
        }
        self.by_frame.entry(det.frame).or_default().push(det);
    }

    pub fn kind(&self) -> DetectionKind {
        self.kind
    }

    pub fn frame(&self, frame: usize) -> &[Detection] {
        self.by_frame.get(&frame).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn frames(&self) -> impl Iterator<Item = (usize, &[Detection])> {
        self.by_frame.iter().map(|(f, d)| (*f, d.as_slice()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Detection> {
        self.by_frame.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.by_frame.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_frame(&self) -> Option<usize> {
        self.by_frame.keys().next_back().copied()
    }

    pub fn of_class(&self, class: ObjectClass) -> Vec<Detection> {
        self.iter().filter(|d| d.class == class).copied().collect()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LineRecord {
    frame: usize,
    detections: Vec<BoxRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxRecord {
    class: String,
    #[serde(default)]
    confidence: Option<f64>,
    bbox: [f64; 4],
}

#[derive(Serialize)]
struct LineOut<'a> {
    frame: usize,
    detections: Vec<BoxOut<'a>>,
}

#[derive(Serialize)]
struct BoxOut<'a> {
    class: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    confidence: Option<f64>,
    bbox: [f64; 4],
}

/// Parses JSON Lines detection records. `origin` is used in error messages.
pub fn parse_detections<R: BufRead>(reader: R, kind: DetectionKind, origin: &Path) -> Result<DetectionSet> {
    let mut set = DetectionSet::new(kind);
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| IngestError::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| IngestError::Parse {
            path: origin.to_path_buf(),
            line: line_no,
            message,
        };
        let record: LineRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        for b in record.detections {
            let class: ObjectClass = b.class.parse().map_err(parse_err)?;
            let confidence = match (kind, b.confidence) {
                (DetectionKind::Predictions, None) => {
                    return Err(parse_err("prediction without confidence".into()))
                }
                (DetectionKind::Predictions, Some(c)) => c,
                (DetectionKind::GroundTruth, _) => 1.0,
            };
            if !(0.0..=1.0).contains(&confidence) {
                return Err(IngestError::Validation(format!(
                    "{}:{line_no}: confidence {confidence} outside [0, 1]",
                    origin.display()
                )));
            }
            let [x0, y0, x1, y1] = b.bbox;
            let bbox = BoundingBox::new(x0, y0, x1, y1).map_err(|e| {
                IngestError::Validation(format!("{}:{line_no}: {e}", origin.display()))
            })?;
            set.push(Detection {
                frame: record.frame,
                class,
                confidence,
                bbox,
            });
        }
    }
    Ok(set)
}

fn load(path: &Path, kind: DetectionKind) -> Result<DetectionSet> {
    let file = fs::File::open(path).map_err(|e| IngestError::io(path, e))?;
    parse_detections(BufReader::new(file), kind, path)
}

pub fn load_detections(path: &Path) -> Result<DetectionSet> {
    load(path, DetectionKind::Predictions)
}

/// Ground-truth files omit `confidence`; a present value is ignored.
pub fn load_ground_truth(path: &Path) -> Result<DetectionSet> {
    load(path, DetectionKind::GroundTruth)
}

/// Writes one JSON line per frame. Floats are written in shortest
/// round-trip form so reloading reproduces every coordinate bit-exactly.
pub fn write_detections<W: Write>(mut w: W, set: &DetectionSet) -> std::io::Result<()> {
    for (frame, dets) in set.frames() {
        let line = LineOut {
            frame,
            detections: dets
                .iter()
                .map(|d| BoxOut {
                    class: d.class.name(),
                    confidence: (set.kind == DetectionKind::Predictions).then_some(d.confidence),
                    bbox: d.bbox.to_array(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

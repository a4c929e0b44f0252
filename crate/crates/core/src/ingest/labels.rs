use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{IngestError, Result};

/// Frame-wise surgical gesture. `G6` is the "no gesture" background label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GestureLabel {
    G0,
    G1,
    G2,
    G3,
    G4,
    G5,
    G6,
    G7,
}

impl GestureLabel {
    pub const ALL: [GestureLabel; 8] = [
        GestureLabel::G0,
        GestureLabel::G1,
        GestureLabel::G2,
        GestureLabel::G3,
        GestureLabel::G4,
        GestureLabel::G5,
        GestureLabel::G6,
        GestureLabel::G7,
    ];

    pub const BACKGROUND: GestureLabel = GestureLabel::G6;

    pub fn code(self) -> &'static str {
        match self {
            GestureLabel::G0 => "G0",
            GestureLabel::G1 => "G1",
            GestureLabel::G2 => "G2",
            GestureLabel::G3 => "G3",
            GestureLabel::G4 => "G4",
            GestureLabel::G5 => "G5",
            GestureLabel::G6 => "G6",
            GestureLabel::G7 => "G7",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            GestureLabel::G0 => "Holding needle with a tool",
            GestureLabel::G1 => "Needle passing",
            GestureLabel::G2 => "Pull the suture",
            GestureLabel::G3 => "Instrumental tie",
            GestureLabel::G4 => "Lay the knot",
            GestureLabel::G5 => "Cut the suture",
            GestureLabel::G6 => "No gesture",
            GestureLabel::G7 => "Hand tie",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for GestureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for GestureLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        GestureLabel::ALL
            .into_iter()
            .find(|g| g.code() == s)
            .ok_or_else(|| format!("unknown gesture label {s:?}"))
    }
}

impl Serialize for GestureLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for GestureLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskProfile {
    /// G0..G6.
    #[default]
    SuturePad,
    /// G0..G7; adds the hand tie.
    Fascia,
}

impl TaskProfile {
    pub fn allows(self, label: GestureLabel) -> bool {
        label != GestureLabel::G7 || self == TaskProfile::Fascia
    }

    pub fn labels(self) -> impl Iterator<Item = GestureLabel> {
        GestureLabel::ALL.into_iter().filter(move |g| self.allows(*g))
    }
}

impl fmt::Display for TaskProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskProfile::SuturePad => "suture_pad",
            TaskProfile::Fascia => "fascia",
        })
    }
}

impl FromStr for TaskProfile {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "suture_pad" | "suture-pad" => Ok(TaskProfile::SuturePad),
            "fascia" => Ok(TaskProfile::Fascia),
            other => Err(format!("unknown task profile {other:?}")),
        }
    }
}

/// One gesture label per frame; never empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSequence {
    labels: Vec<GestureLabel>,
}

impl LabelSequence {
    pub fn new(labels: Vec<GestureLabel>) -> Result<Self> {
        if labels.is_empty() {
            return Err(IngestError::Validation("empty label sequence".into()));
        }
        Ok(LabelSequence { labels })
    }

    pub fn labels(&self) -> &[GestureLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, frame: usize) -> Option<GestureLabel> {
        self.labels.get(frame).copied()
    }
}

pub fn parse_labels(text: &str, profile: TaskProfile, origin: &Path) -> Result<LabelSequence> {
    let mut labels = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let token = raw.trim();
        // a trailing blank line is tolerated, interior blanks are not
        if token.is_empty() {
            if text.lines().skip(i).all(|l| l.trim().is_empty()) {
                break;
            }
            return Err(IngestError::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: "blank line inside label file".into(),
            });
        }
        let label: GestureLabel = token.parse().map_err(|message| IngestError::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            message,
        })?;
        if !profile.allows(label) {
            return Err(IngestError::Profile {
                path: origin.to_path_buf(),
                line: i + 1,
                label: token.to_string(),
                profile,
            });
        }
        labels.push(label);
    }
    LabelSequence::new(labels).map_err(|_| {
        IngestError::Validation(format!("{}: label file is empty", origin.display()))
    })
}

pub fn load_labels(path: &Path, profile: TaskProfile) -> Result<LabelSequence> {
    let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    parse_labels(&text, profile, path)
}

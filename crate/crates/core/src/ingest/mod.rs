//! Parsers for every on-disk input: depth sequences, camera intrinsics,
//! detection files, frame-wise gesture labels and group manifests.
//!
//! Everything returned from here is a validated, immutable value.

mod depth;
mod detections;
mod labels;
mod manifest;
pub mod pgm;

use std::path::PathBuf;

pub use depth::{
    frame_file_name, load_depth_sequence, load_intrinsics, CameraIntrinsics, DepthFrame, DepthMeta, DepthSequence,
    DEFAULT_FPS,
};
pub use detections::{
    load_detections, load_ground_truth, parse_detections, write_detections, BoundingBox,
    Detection, DetectionKind, DetectionSet, ObjectClass,
};
pub use labels::{load_labels, parse_labels, GestureLabel, LabelSequence, TaskProfile};
pub use manifest::{load_manifest, GroupManifest, ManifestEntry, SkillGroup};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing frame indices {missing:?}")]
    Gap { missing: Vec<usize> },
    #[error("format error: {0}")]
    Format(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("{path}:{line}: label {label} is not allowed under the {profile} profile")]
    Profile {
        path: PathBuf,
        line: usize,
        label: String,
        profile: TaskProfile,
    },
}

impl IngestError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, IngestError>;

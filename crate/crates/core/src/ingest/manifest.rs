use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{IngestError, Result, TaskProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SkillGroup {
    Expert,
    Resident,
}

impl fmt::Display for SkillGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkillGroup::Expert => "Expert",
            SkillGroup::Resident => "Resident",
        })
    }
}

/// One recording. Relative paths are resolved against the manifest's
/// directory when loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub participant: String,
    pub group: SkillGroup,
    pub task: String,
    #[serde(default)]
    pub profile: TaskProfile,
    pub depth_dir: PathBuf,
    /// Defaults to `<depth_dir>/meta.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<PathBuf>,
    pub detections: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
}

impl ManifestEntry {
    pub fn meta_path(&self) -> PathBuf {
        self.meta
            .clone()
            .unwrap_or_else(|| self.depth_dir.join("meta.json"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupManifest {
    entries: Vec<ManifestEntry>,
}

impl GroupManifest {
    /// Checks id uniqueness per (task, group) and that every path exists.
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if e.participant.is_empty() {
                return Err(IngestError::Validation("manifest entry with empty participant id".into()));
            }
            if !seen.insert((e.task.as_str(), e.group, e.participant.as_str())) {
                return Err(IngestError::Validation(format!(
                    "participant {:?} listed twice for task {:?} in group {}",
                    e.participant, e.task, e.group
                )));
            }
            let mut paths = vec![e.depth_dir.clone(), e.meta_path(), e.detections.clone()];
            paths.extend(e.labels.clone());
            if let Some(missing) = paths.iter().find(|p| !p.exists()) {
                return Err(IngestError::Validation(format!(
                    "participant {:?}: path {} does not exist",
                    e.participant,
                    missing.display()
                )));
            }
        }
        Ok(GroupManifest { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct task ids in sorted order.
    pub fn tasks(&self) -> Vec<String> {
        let mut tasks: Vec<String> = self.entries.iter().map(|e| e.task.clone()).collect();
        tasks.sort();
        tasks.dedup();
        tasks
    }
}

pub fn load_manifest(path: &Path) -> Result<GroupManifest> {
    let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    let mut entries: Vec<ManifestEntry> =
        serde_json::from_str(&text).map_err(|e| IngestError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let resolve = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    for e in &mut entries {
        resolve(&mut e.depth_dir);
        resolve(&mut e.detections);
        if let Some(m) = e.meta.as_mut() {
            resolve(m);
        }
        if let Some(l) = e.labels.as_mut() {
            resolve(l);
        }
    }
    GroupManifest::new(entries)
}

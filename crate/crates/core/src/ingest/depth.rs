use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pgm;
use super::{IngestError, Result};

/// Frame rate assumed when `meta.json` omits `fps`. Reports flag its use.
pub const DEFAULT_FPS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Meters per raw depth unit.
    pub depth_scale: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, depth_scale: f64) -> Result<Self> {
        let intr = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            depth_scale,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.fx, self.fy, self.cx, self.cy, self.depth_scale]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(IngestError::Validation(
                "intrinsics must be finite".into(),
            ));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 || self.depth_scale <= 0.0 {
            return Err(IngestError::Validation(format!(
                "intrinsics require fx, fy, depth_scale > 0 (got fx={}, fy={}, depth_scale={})",
                self.fx, self.fy, self.depth_scale
            )));
        }
        Ok(())
    }

    /// Principal point must fall inside the image it is paired with.
    pub fn check_image(&self, width: usize, height: usize) -> Result<()> {
        if !(0.0..width as f64).contains(&self.cx) || !(0.0..height as f64).contains(&self.cy) {
            return Err(IngestError::Validation(format!(
                "principal point ({}, {}) outside {width}x{height} image",
                self.cx, self.cy
            )));
        }
        Ok(())
    }
}

pub fn load_intrinsics(path: &Path) -> Result<CameraIntrinsics> {
    let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    let intr: CameraIntrinsics = serde_json::from_str(&text).map_err(|e| IngestError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    intr.validate()?;
    Ok(intr)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthMeta {
    pub width: usize,
    pub height: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
    pub depth_scale: f64,
}

impl DepthMeta {
    pub fn fps(&self) -> f64 {
        self.fps.unwrap_or(DEFAULT_FPS)
    }

    pub fn fps_defaulted(&self) -> bool {
        self.fps.is_none()
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(IngestError::Validation("meta.json: zero image dimension".into()));
        }
        if !(self.depth_scale.is_finite() && self.depth_scale > 0.0) {
            return Err(IngestError::Validation(
                "meta.json: depth_scale must be positive".into(),
            ));
        }
        if let Some(fps) = self.fps {
            if !(fps.is_finite() && fps > 0.0) {
                return Err(IngestError::Validation("meta.json: fps must be positive".into()));
            }
        }
        Ok(())
    }
}

/// One depth image. Raw device units, row-major; 0 means no return.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    pub index: usize,
    pub width: usize,
    pub height: usize,
    pub values: Vec<u16>,
    pub timestamp: f64,
}

impl DepthFrame {
    pub fn new(index: usize, width: usize, height: usize, values: Vec<u16>, timestamp: f64) -> Result<Self> {
        if values.len() != width * height {
            return Err(IngestError::Format(format!(
                "frame {index}: {} samples for a {width}x{height} image",
                values.len()
            )));
        }
        Ok(DepthFrame {
            index,
            width,
            height,
            values,
            timestamp,
        })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u16 {
        self.values[y * self.width + x]
    }
}

/// An indexed, gap-free run of depth frames on disk. Frames are decoded on
/// demand; headers were already checked when the sequence was opened.
#[derive(Debug, Clone)]
pub struct DepthSequence {
    meta: DepthMeta,
    paths: Vec<PathBuf>,
}

fn parse_frame_name(name: &str) -> Option<usize> {
    let digits = name.strip_prefix("frame_")?.strip_suffix(".pgm")?;
    if digits.len() < 6 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.pgm")
}

fn read_header(path: &Path) -> Result<pgm::PgmHeader> {
    let mut file = fs::File::open(path).map_err(|e| IngestError::io(path, e))?;
    let mut prefix = Vec::with_capacity(512);
    file.by_ref()
        .take(512)
        .read_to_end(&mut prefix)
        .map_err(|e| IngestError::io(path, e))?;
    match pgm::parse_header(&prefix) {
        Ok(h) => Ok(h),
        // long comment blocks can push the header past the prefix
        Err(_) if prefix.len() == 512 => {
            let all = fs::read(path).map_err(|e| IngestError::io(path, e))?;
            pgm::parse_header(&all)
        }
        Err(e) => Err(e),
    }
}

fn check_header(path: &Path, header: &pgm::PgmHeader, meta: &DepthMeta) -> Result<()> {
    if header.maxval != 65535 {
        return Err(IngestError::Format(format!(
            "{}: maxval {} (depth frames must be 16-bit, maxval 65535)",
            path.display(),
            header.maxval
        )));
    }
    if header.width != meta.width || header.height != meta.height {
        return Err(IngestError::Format(format!(
            "{}: {}x{} frame, meta.json declares {}x{}",
            path.display(),
            header.width,
            header.height,
            meta.width,
            meta.height
        )));
    }
    Ok(())
}

/// Opens a directory of `frame_%06d.pgm` files described by `meta_path`.
pub fn load_depth_sequence(dir: &Path, meta_path: &Path) -> Result<DepthSequence> {
    let meta_text = fs::read_to_string(meta_path).map_err(|e| IngestError::io(meta_path, e))?;
    let meta: DepthMeta = serde_json::from_str(&meta_text).map_err(|e| IngestError::Parse {
        path: meta_path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    meta.validate()?;

    let mut indexed = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| IngestError::io(dir, e))? {
        let entry = entry.map_err(|e| IngestError::io(dir, e))?;
        if let Some(index) = entry.file_name().to_str().and_then(parse_frame_name) {
            indexed.push((index, entry.path()));
        }
    }
    if indexed.is_empty() {
        return Err(IngestError::Validation(format!(
            "{}: no frame_NNNNNN.pgm files",
            dir.display()
        )));
    }
    indexed.sort();
    if let Some(w) = indexed.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(IngestError::Validation(format!(
            "duplicate frame index {} ({} and {})",
            w[0].0,
            w[0].1.display(),
            w[1].1.display()
        )));
    }
    let last = indexed.last().map(|(i, _)| *i).unwrap_or(0);
    if indexed.len() != last + 1 {
        let mut present = indexed.iter().map(|(i, _)| *i).peekable();
        let missing = (0..=last)
            .filter(|i| {
                if present.peek() == Some(i) {
                    present.next();
                    false
                } else {
                    true
                }
            })
            .collect();
        return Err(IngestError::Gap { missing });
    }

    let paths: Vec<PathBuf> = indexed.into_iter().map(|(_, p)| p).collect();
    for path in &paths {
        check_header(path, &read_header(path)?, &meta)?;
    }
    Ok(DepthSequence { meta, paths })
}

impl DepthSequence {
    pub fn meta(&self) -> &DepthMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn path(&self, index: usize) -> &Path {
        &self.paths[index]
    }

    pub fn frame(&self, index: usize) -> Result<DepthFrame> {
        let path = self.paths.get(index).ok_or_else(|| {
            IngestError::Validation(format!("frame {index} outside sequence of {}", self.len()))
        })?;
        let bytes = fs::read(path).map_err(|e| IngestError::io(path, e))?;
        let img = pgm::decode(&bytes)
            .map_err(|e| IngestError::Format(format!("{}: {e}", path.display())))?;
        let header = pgm::PgmHeader {
            width: img.width,
            height: img.height,
            maxval: img.maxval,
            data_offset: 0,
        };
        check_header(path, &header, &self.meta)?;
        DepthFrame::new(
            index,
            img.width,
            img.height,
            img.samples,
            index as f64 / self.meta.fps(),
        )
    }

    /// Frames in ascending index order.
    pub fn frames(&self) -> impl Iterator<Item = Result<DepthFrame>> + '_ {
        (0..self.len()).map(move |i| self.frame(i))
    }

    pub fn read_all(&self) -> Result<Vec<DepthFrame>> {
        self.frames().collect()
    }
}

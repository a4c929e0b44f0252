//! Depth to 8-bit grayscale: near is white, far is black, no return is 0.

use serde::Serialize;

use crate::ingest::DepthFrame;

#[derive(Debug, thiserror::Error)]
pub enum VizError {
    #[error("invalid grayscale mapping: near={near} far={far} (need 0 < near < far)")]
    InvalidMapping { near: f64, far: f64 },
    #[error("frame has no valid depth samples to derive a range from")]
    NoValidDepth,
}

pub type Result<T> = std::result::Result<T, VizError>;

/// Linear depth ramp in meters: `near` maps to 255, `far` to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrayscaleMapping {
    near: f64,
    far: f64,
}

impl GrayscaleMapping {
    pub fn new(near: f64, far: f64) -> Result<Self> {
        if !(near.is_finite() && far.is_finite() && near > 0.0 && near < far) {
            return Err(VizError::InvalidMapping { near, far });
        }
        Ok(GrayscaleMapping { near, far })
    }

    pub fn near(&self) -> f64 {
        self.near
    }

    pub fn far(&self) -> f64 {
        self.far
    }

    /// Gray level for a depth in meters, rounding half up.
    pub fn gray(&self, meters: f64) -> u8 {
        let d = meters.clamp(self.near, self.far);
        let level = 255.0 * (self.far - d) / (self.far - self.near);
        (level + 0.5).floor().clamp(0.0, 255.0) as u8
    }

    /// Range spanning the 1st to 99th percentile (nearest rank) of the valid
    /// depths in `frame`. A degenerate range is widened by one raw unit.
    pub fn from_percentiles(frame: &DepthFrame, depth_scale: f64) -> Result<Self> {
        let mut valid: Vec<u16> = frame.values.iter().copied().filter(|&d| d != 0).collect();
        if valid.is_empty() {
            return Err(VizError::NoValidDepth);
        }
        valid.sort_unstable();
        let pick = |q: f64| {
            let rank = (q * valid.len() as f64).ceil().max(1.0) as usize;
            valid[rank.min(valid.len()) - 1]
        };
        let (lo, mut hi) = (pick(0.01), pick(0.99));
        if hi <= lo {
            hi = lo + 1;
        }
        GrayscaleMapping::new(f64::from(lo) * depth_scale, f64::from(hi) * depth_scale)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

pub fn depth_to_gray(frame: &DepthFrame, mapping: &GrayscaleMapping, depth_scale: f64) -> GrayImage {
    let pixels = frame
        .values
        .iter()
        .map(|&raw| {
            if raw == 0 {
                0
            } else {
                mapping.gray(f64::from(raw) * depth_scale)
            }
        })
        .collect();
    GrayImage {
        width: frame.width,
        height: frame.height,
        pixels,
    }
}

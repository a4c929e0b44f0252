//! Binary PGM (P5) reading and writing.
//!
//! Samples wider than 8 bits are stored big-endian, two bytes per sample.

use std::io::Write;

use super::{IngestError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PgmHeader {
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    /// Byte offset of the first sample.
    pub data_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    pub samples: Vec<u16>,
}

fn format_err(msg: impl Into<String>) -> IngestError {
    IngestError::Format(msg.into())
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn next_uint(&mut self, what: &str) -> Result<u32> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format_err(format!("expected {what} in PGM header")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err(format!("{what} out of range in PGM header")))
    }
}

pub fn parse_header(bytes: &[u8]) -> Result<PgmHeader> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(format_err("not a binary PGM (missing P5 magic)"));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.next_uint("width")? as usize;
    let height = cur.next_uint("height")? as usize;
    let maxval = cur.next_uint("maxval")?;
    if width == 0 || height == 0 {
        return Err(format_err("PGM dimensions must be nonzero"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format_err(format!("PGM maxval {maxval} outside 1..=65535")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => {}
        _ => return Err(format_err("truncated PGM header")),
    }
    Ok(PgmHeader {
        width,
        height,
        maxval,
        data_offset: cur.pos + 1,
    })
}

pub fn decode(bytes: &[u8]) -> Result<PgmImage> {
    let header = parse_header(bytes)?;
    let count = header.width * header.height;
    let bytes_per_sample = if header.maxval > 255 { 2 } else { 1 };
    let raster = &bytes[header.data_offset..];
    if raster.len() < count * bytes_per_sample {
        return Err(format_err(format!(
            "PGM raster truncated: expected {} bytes, found {}",
            count * bytes_per_sample,
            raster.len()
        )));
    }
    let samples: Vec<u16> = if bytes_per_sample == 2 {
        raster[..count * 2]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        raster[..count].iter().map(|&b| u16::from(b)).collect()
    };
    if let Some(bad) = samples.iter().find(|&&s| u32::from(s) > header.maxval) {
        return Err(format_err(format!(
            "sample {bad} exceeds maxval {}",
            header.maxval
        )));
    }
    Ok(PgmImage {
        width: header.width,
        height: header.height,
        maxval: header.maxval,
        samples,
    })
}

pub fn encode_u16(width: usize, height: usize, samples: &[u16]) -> Vec<u8> {
    assert_eq!(samples.len(), width * height, "sample count mismatch");
    let mut out = Vec::with_capacity(samples.len() * 2 + 32);
    write!(out, "P5\n{width} {height}\n65535\n").expect("write to Vec");
    for s in samples {
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

pub fn encode_u8(width: usize, height: usize, samples: &[u8]) -> Vec<u8> {
    assert_eq!(samples.len(), width * height, "sample count mismatch");
    let mut out = Vec::with_capacity(samples.len() + 32);
    write!(out, "P5\n{width} {height}\n255\n").expect("write to Vec");
    out.extend_from_slice(samples);
    out
}

//! Synthetic cohort rendering: depth PGMs, JSONL detections and label files
//! for experts moving little and residents moving a lot.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use skillgauge_core::ingest::{frame_file_name, pgm, GestureLabel};

pub const WIDTH: usize = 160;
pub const HEIGHT: usize = 120;
pub const FX: f64 = 150.0;
pub const FY: f64 = 150.0;
pub const CX: f64 = 80.0;
pub const CY: f64 = 60.0;
pub const DEPTH_SCALE: f64 = 0.001;
const BACKGROUND_MM: u16 = 1200;
const BLOB_HALF: f64 = 5.5;

#[derive(Debug, Clone, Copy)]
pub struct CohortSpec {
    pub experts: usize,
    pub residents: usize,
    pub frames: usize,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            experts: 4,
            residents: 8,
            frames: 90,
            seed: 7,
        }
    }
}

pub struct Cohort {
    pub manifest: PathBuf,
    pub intrinsics: PathBuf,
}

/// Hand center in camera coordinates for each frame, `None` for dropouts.
fn hand_path(rng: &mut ChaCha8Rng, expert: bool, side: f64, frames: usize) -> Vec<Option<[f64; 3]>> {
    let base = [0.12 * side, 0.0, 0.70];
    let (radius, jitter, dropout) = if expert { (0.01, 0.0, 0.0) } else { (0.03, 0.008, 0.05) };
    let phase: f64 = rng.gen_range(0.0..2.0 * PI);
    (0..frames)
        .map(|t| {
            let a = phase + 2.0 * PI * t as f64 / frames as f64;
            let mut j = || if jitter > 0.0 { rng.gen_range(-jitter..jitter) } else { 0.0 };
            let p = [
                base[0] + radius * a.cos() + j(),
                base[1] + radius * a.sin() + j(),
                base[2] + 0.5 * radius * (2.0 * a).sin() + j(),
            ];
            let dropped = dropout > 0.0 && t > 0 && t + 1 < frames && rng.gen_bool(dropout);
            (!dropped).then_some(p)
        })
        .collect()
}

fn project(p: [f64; 3]) -> (f64, f64) {
    (FX * p[0] / p[2] + CX, FY * p[1] / p[2] + CY)
}

fn labels_for(frames: usize) -> Vec<GestureLabel> {
    (0..frames).map(|t| GestureLabel::ALL[(t / 10) % 7]).collect()
}

fn write_participant(dir: &Path, expert: bool, frames: usize, rng: &mut ChaCha8Rng) {
    let depth_dir = dir.join("depth");
    fs::create_dir_all(&depth_dir).unwrap();
    fs::write(
        depth_dir.join("meta.json"),
        json!({"width": WIDTH, "height": HEIGHT, "fps": 30.0, "depth_scale": DEPTH_SCALE}).to_string(),
    )
    .unwrap();
    let left = hand_path(rng, expert, -1.0, frames);
    let right = hand_path(rng, expert, 1.0, frames);

    let mut det_lines = String::new();
    for t in 0..frames {
        let mut depth = vec![BACKGROUND_MM; WIDTH * HEIGHT];
        for (i, d) in depth.iter_mut().enumerate() {
            // sprinkle sensor dropouts
            if (i * 31 + t * 7) % 97 == 0 {
                *d = 0;
            }
        }
        let mut boxes = Vec::new();
        for (hand, name) in [(&left[t], "Left Hand"), (&right[t], "Right Hand")] {
            let Some(p) = hand else { continue };
            let (u, v) = project(*p);
            let z_mm = (p[2] / DEPTH_SCALE).round() as u16;
            for y in 0..HEIGHT {
                for x in 0..WIDTH {
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    if (px - u).abs() <= BLOB_HALF && (py - v).abs() <= BLOB_HALF {
                        depth[y * WIDTH + x] = z_mm;
                    }
                }
            }
            boxes.push(json!({
                "class": name,
                "confidence": 0.9,
                "bbox": [u - 5.0, v - 5.0, u + 5.0, v + 5.0],
            }));
        }
        // a low-confidence distractor that must never be picked
        boxes.push(json!({"class": "Left Hand", "confidence": 0.2, "bbox": [1.0, 1.0, 9.0, 9.0]}));
        fs::write(depth_dir.join(frame_file_name(t)), pgm::encode_u16(WIDTH, HEIGHT, &depth)).unwrap();
        det_lines.push_str(&json!({"frame": t, "detections": boxes}).to_string());
        det_lines.push('\n');
    }
    fs::write(dir.join("detections.jsonl"), det_lines).unwrap();
    let labels: String = labels_for(frames).iter().map(|g| format!("{g}\n")).collect();
    fs::write(dir.join("labels.txt"), labels).unwrap();
}

/// Renders the whole cohort under `root`.
pub fn write_cohort(root: &Path, spec: CohortSpec) -> Cohort {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut entries = Vec::new();
    let groups = (0..spec.experts)
        .map(|i| (format!("E{i:02}"), true))
        .chain((0..spec.residents).map(|i| (format!("R{i:02}"), false)));
    for (id, expert) in groups {
        let dir = root.join(&id);
        write_participant(&dir, expert, spec.frames, &mut rng);
        entries.push(json!({
            "participant": id,
            "group": if expert { "Expert" } else { "Resident" },
            "task": "task1",
            "profile": "suture_pad",
            "depth_dir": format!("{id}/depth"),
            "detections": format!("{id}/detections.jsonl"),
            "labels": format!("{id}/labels.txt"),
        }));
    }
    let manifest = root.join("manifest.json");
    fs::write(&manifest, serde_json::to_string_pretty(&entries).unwrap()).unwrap();
    let intrinsics = root.join("intrinsics.json");
    fs::write(
        &intrinsics,
        json!({"fx": FX, "fy": FY, "cx": CX, "cy": CY, "depth_scale": DEPTH_SCALE}).to_string(),
    )
    .unwrap();
    Cohort { manifest, intrinsics }
}

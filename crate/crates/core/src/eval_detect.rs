//! Object-detection evaluation: IoU, per-class average precision and
//! AP averaged over a sweep of IoU thresholds (0.50 to 0.95 by default).
//!
//! AP uses all-points interpolation: the precision envelope is made
//! nonincreasing in recall and integrated exactly. Matching is greedy in
//! descending confidence and never crosses frames.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::ingest::{BoundingBox, Detection, DetectionSet, ObjectClass};

#[derive(Debug, thiserror::Error)]
pub enum DetectEvalError {
    #[error("validation error: {0}")]
    Validation(String),
}

pub type Result<T> = std::result::Result<T, DetectEvalError>;

/// The ten IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn default_iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionEvalConfig {
    pub iou_thresholds: Vec<f64>,
    pub classes: Vec<ObjectClass>,
}

impl Default for DetectionEvalConfig {
    fn default() -> Self {
        DetectionEvalConfig {
            iou_thresholds: default_iou_thresholds(),
            classes: ObjectClass::ALL.to_vec(),
        }
    }
}

impl DetectionEvalConfig {
    pub fn new(iou_thresholds: Vec<f64>, classes: Vec<ObjectClass>) -> Result<Self> {
        let cfg = DetectionEvalConfig {
            iou_thresholds,
            classes,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(DetectEvalError::Validation("no IoU thresholds".into()));
        }
        if let Some(t) = self.iou_thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(DetectEvalError::Validation(format!(
                "IoU threshold {t} outside (0, 1]"
            )));
        }
        if self.iou_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DetectEvalError::Validation(
                "IoU thresholds must be strictly increasing".into(),
            ));
        }
        if self.classes.is_empty() {
            return Err(DetectEvalError::Validation("no classes selected".into()));
        }
        Ok(())
    }
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = (a.x_max().min(b.x_max()) - a.x_min().max(b.x_min())).max(0.0);
    let h = (a.y_max().min(b.y_max()) - a.y_min().max(b.y_min())).max(0.0);
    let inter = w * h;
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// True-positive flag per detection of `class`, in descending-confidence
/// order. Equal confidences keep their input order.
pub fn match_detections(dets: &[Detection], gts: &[Detection], class: ObjectClass, iou_t: f64) -> Vec<bool> {
    let mut ranked: Vec<&Detection> = dets.iter().filter(|d| d.class == class).collect();
    ranked.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));

    let mut gts_by_frame: BTreeMap<usize, Vec<(&Detection, bool)>> = BTreeMap::new();
    for g in gts.iter().filter(|g| g.class == class) {
        gts_by_frame.entry(g.frame).or_default().push((g, false));
    }

    ranked
        .iter()
        .map(|d| {
            let Some(candidates) = gts_by_frame.get_mut(&d.frame) else {
                return false;
            };
            let mut best: Option<(usize, f64)> = None;
            for (i, (g, used)) in candidates.iter().enumerate() {
                if *used {
                    continue;
                }
                let o = iou(&d.bbox, &g.bbox);
                if o >= iou_t && best.is_none_or(|(_, b)| o > b) {
                    best = Some((i, o));
                }
            }
            match best {
                Some((i, _)) => {
                    candidates[i].1 = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// Area under the all-points interpolated PR curve given ranked TP flags.
///
/// Recall rises by `1/n_gt` at every true positive, so the integral is the
/// sum of envelope precisions at the TP ranks divided by `n_gt`.
pub fn ap_from_flags(tp_flags: &[bool], n_gt: usize) -> f64 {
    assert!(n_gt > 0, "AP is undefined without ground truth");
    let mut tp = 0usize;
    let mut precision: Vec<f64> = tp_flags
        .iter()
        .enumerate()
        .map(|(k, &is_tp)| {
            tp += usize::from(is_tp);
            tp as f64 / (k + 1) as f64
        })
        .collect();
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let sum: f64 = tp_flags
        .iter()
        .zip(&precision)
        .filter(|(is_tp, _)| **is_tp)
        .map(|(_, p)| *p)
        .sum();
    sum / n_gt as f64
}

/// `None` when `class` has no ground-truth instance.
pub fn average_precision(dets: &[Detection], gts: &[Detection], class: ObjectClass, iou_t: f64) -> Option<f64> {
    let n_gt = gts.iter().filter(|g| g.class == class).count();
    if n_gt == 0 {
        return None;
    }
    Some(ap_from_flags(&match_detections(dets, gts, class, iou_t), n_gt))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAp {
    pub class: ObjectClass,
    pub occurrence: usize,
    /// One entry per threshold; `None` without ground truth.
    pub ap: Vec<Option<f64>>,
    pub ap_50_95: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApTable {
    pub iou_thresholds: Vec<f64>,
    pub classes: Vec<ClassAp>,
    /// Mean of `ap_50_95` over classes with ground truth.
    pub map_50_95: f64,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn map_50_95(preds: &DetectionSet, gts: &DetectionSet, config: &DetectionEvalConfig) -> Result<ApTable> {
    config.validate()?;
    if gts.is_empty() {
        return Err(DetectEvalError::Validation("ground truth set is empty".into()));
    }
    let dets: Vec<Detection> = preds.iter().copied().collect();
    let truth: Vec<Detection> = gts.iter().copied().collect();

    let classes: Vec<ClassAp> = config
        .classes
        .iter()
        .map(|&class| {
            let occurrence = truth.iter().filter(|g| g.class == class).count();
            let ap: Vec<Option<f64>> = config
                .iou_thresholds
                .iter()
                .map(|&t| average_precision(&dets, &truth, class, t))
                .collect();
            let ap_50_95 = ap
                .iter()
                .copied()
                .collect::<Option<Vec<f64>>>()
                .map(|v| mean(&v));
            ClassAp {
                class,
                occurrence,
                ap,
                ap_50_95,
            }
        })
        .collect();

    let present: Vec<f64> = classes.iter().filter_map(|c| c.ap_50_95).collect();
    if present.is_empty() {
        return Err(DetectEvalError::Validation(
            "no selected class has ground-truth instances".into(),
        ));
    }
    Ok(ApTable {
        iou_thresholds: config.iou_thresholds.clone(),
        map_50_95: mean(&present),
        classes,
    })
}

impl ApTable {
    /// `class,occurrence,AP_50_95` rows followed by an `Average` row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "class,occurrence,AP_50_95")?;
        for c in &self.classes {
            match c.ap_50_95 {
                Some(ap) => writeln!(w, "{},{},{:.3}", c.class, c.occurrence, ap)?,
                None => writeln!(w, "{},{},", c.class, c.occurrence)?,
            }
        }
        writeln!(w, "Average,-,{:.3}", self.map_50_95)
    }
}

/// Precision and recall of detections kept at one confidence cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidencePoint {
    pub confidence_threshold: f64,
    pub kept: usize,
    pub precision: Option<f64>,
    pub recall: f64,
}

/// Diagnostic sweep over confidence cutoffs at a fixed IoU threshold.
pub fn confidence_sweep(
    dets: &[Detection],
    gts: &[Detection],
    class: ObjectClass,
    iou_t: f64,
    thresholds: &[f64],
) -> Option<Vec<ConfidencePoint>> {
    let n_gt = gts.iter().filter(|g| g.class == class).count();
    if n_gt == 0 {
        return None;
    }
    Some(
        thresholds
            .iter()
            .map(|&t| {
                let kept: Vec<Detection> = dets
                    .iter()
                    .filter(|d| d.class == class && d.confidence >= t)
                    .copied()
                    .collect();
                let tp = match_detections(&kept, gts, class, iou_t)
                    .into_iter()
                    .filter(|f| *f)
                    .count();
                ConfidencePoint {
                    confidence_threshold: t,
                    kept: kept.len(),
                    precision: (!kept.is_empty()).then(|| tp as f64 / kept.len() as f64),
                    recall: tp as f64 / n_gt as f64,
                }
            })
            .collect(),
    )
}

//! Temporal action-segmentation metrics: frame accuracy, segmental edit
//! score and F1@k with greedy temporal-order segment matching.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::ingest::{GestureLabel, LabelSequence};

/// Overlap thresholds reported by default, in percent.
pub const DEFAULT_F1_THRESHOLDS: [u32; 3] = [10, 25, 50];

#[derive(Debug, thiserror::Error)]
pub enum SegmentEvalError {
    #[error("validation error: {0}")]
    Validation(String),
}

pub type Result<T> = std::result::Result<T, SegmentEvalError>;

/// Maximal run of one label, frames `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub label: GestureLabel,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Intersection and union of the two frame intervals, in frames.
    fn overlap(&self, o: &Segment) -> (usize, usize) {
        let lo = self.start.max(o.start);
        let hi = self.end.min(o.end);
        let inter = if hi >= lo { hi - lo + 1 } else { 0 };
        (inter, self.len() + o.len() - inter)
    }
}

pub fn to_segments(labels: &[GestureLabel]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for (frame, &label) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(seg) if seg.label == label => seg.end = frame,
            _ => out.push(Segment {
                label,
                start: frame,
                end: frame,
            }),
        }
    }
    out
}

fn check_lengths(gt: &LabelSequence, pred: &LabelSequence) -> Result<()> {
    if gt.len() != pred.len() {
        return Err(SegmentEvalError::Validation(format!(
            "ground truth has {} frames, prediction has {}",
            gt.len(),
            pred.len()
        )));
    }
    Ok(())
}

/// Percentage of frames whose labels agree.
pub fn frame_accuracy(gt: &LabelSequence, pred: &LabelSequence) -> Result<f64> {
    check_lengths(gt, pred)?;
    let correct = gt
        .labels()
        .iter()
        .zip(pred.labels())
        .filter(|(a, b)| a == b)
        .count();
    Ok(100.0 * correct as f64 / gt.len() as f64)
}

/// Unit-cost Levenshtein distance, two-row dynamic program.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `100·(1 − lev / max(|gt|, |pred|))` over segment label order; durations
/// play no part. Two empty sequences score 100.
pub fn edit_score(gt: &[Segment], pred: &[Segment]) -> f64 {
    let longest = gt.len().max(pred.len());
    if longest == 0 {
        return 100.0;
    }
    let a: Vec<GestureLabel> = gt.iter().map(|s| s.label).collect();
    let b: Vec<GestureLabel> = pred.iter().map(|s| s.label).collect();
    100.0 * (1.0 - levenshtein(&a, &b) as f64 / longest as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct F1Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl F1Counts {
    /// `200·TP / (2·TP + FP + FN)`, 0 when nothing was predicted or expected.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            200.0 * self.tp as f64 / denom as f64
        }
    }

    fn add(&mut self, o: &F1Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

/// Predictions are visited in temporal order; each one claims the unmatched
/// same-label ground-truth segment with the highest interval IoU, provided
/// that IoU is at least `k` percent.
pub fn f1_counts(gt: &[Segment], pred: &[Segment], k: f64) -> F1Counts {
    let mut used = vec![false; gt.len()];
    let mut tp = 0;
    for p in pred {
        let mut best: Option<(usize, usize, usize)> = None; // (index, inter, union)
        for (i, g) in gt.iter().enumerate() {
            if used[i] || g.label != p.label {
                continue;
            }
            let (inter, union) = p.overlap(g);
            // iou >= k/100, kept in exact arithmetic
            if (inter as f64) * 100.0 < k * union as f64 {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, bi, bu)) => inter * bu > bi * union,
            };
            if better {
                best = Some((i, inter, union));
            }
        }
        if let Some((i, _, _)) = best {
            used[i] = true;
            tp += 1;
        }
    }
    F1Counts {
        tp,
        fp: pred.len() - tp,
        fn_: gt.len() - tp,
    }
}

pub fn f1_at_k(gt: &[Segment], pred: &[Segment], k: f64) -> Result<f64> {
    if !(k > 0.0 && k < 100.0) {
        return Err(SegmentEvalError::Validation(format!(
            "F1 overlap threshold {k} outside (0, 100)"
        )));
    }
    Ok(f1_counts(gt, pred, k).f1())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SegmentEvalOptions {
    /// Drop "no gesture" segments before edit and F1 scoring.
    pub exclude_background: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentationScore {
    pub accuracy: f64,
    pub edit: f64,
    /// Keyed by overlap threshold in percent.
    pub f1: BTreeMap<u32, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VideoScore {
    pub score: SegmentationScore,
    pub counts: BTreeMap<u32, F1Counts>,
}

fn scored_segments(labels: &LabelSequence, opts: SegmentEvalOptions) -> Vec<Segment> {
    let mut segs = to_segments(labels.labels());
    if opts.exclude_background {
        segs.retain(|s| s.label != GestureLabel::BACKGROUND);
    }
    segs
}

pub fn score_video(gt: &LabelSequence, pred: &LabelSequence, opts: SegmentEvalOptions) -> Result<VideoScore> {
    let accuracy = frame_accuracy(gt, pred)?;
    let g = scored_segments(gt, opts);
    let p = scored_segments(pred, opts);
    let counts: BTreeMap<u32, F1Counts> = DEFAULT_F1_THRESHOLDS
        .iter()
        .map(|&k| (k, f1_counts(&g, &p, f64::from(k))))
        .collect();
    Ok(VideoScore {
        score: SegmentationScore {
            accuracy,
            edit: edit_score(&g, &p),
            f1: counts.iter().map(|(k, c)| (*k, c.f1())).collect(),
        },
        counts,
    })
}

/// Scores over a split of videos.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitScore {
    pub videos: Vec<VideoScore>,
    /// F1 from pooled TP/FP/FN; accuracy pooled over all frames; edit is the
    /// per-video mean.
    pub micro: SegmentationScore,
    /// Per-video means of every metric.
    pub macro_: SegmentationScore,
}

pub fn score_split(pairs: &[(LabelSequence, LabelSequence)], opts: SegmentEvalOptions) -> Result<SplitScore> {
    if pairs.is_empty() {
        return Err(SegmentEvalError::Validation("no videos to score".into()));
    }
    let videos: Vec<VideoScore> = pairs
        .iter()
        .map(|(g, p)| score_video(g, p, opts))
        .collect::<Result<_>>()?;
    let n = videos.len() as f64;
    let mean_of = |f: &dyn Fn(&VideoScore) -> f64| videos.iter().map(f).sum::<f64>() / n;

    let mut pooled: BTreeMap<u32, F1Counts> = BTreeMap::new();
    for v in &videos {
        for (k, c) in &v.counts {
            pooled.entry(*k).or_default().add(c);
        }
    }
    let frames: usize = pairs.iter().map(|(g, _)| g.len()).sum();
    let correct: usize = pairs
        .iter()
        .map(|(g, p)| g.labels().iter().zip(p.labels()).filter(|(a, b)| a == b).count())
        .sum();

    let edit = mean_of(&|v| v.score.edit);
    let micro = SegmentationScore {
        accuracy: 100.0 * correct as f64 / frames as f64,
        edit,
        f1: pooled.iter().map(|(k, c)| (*k, c.f1())).collect(),
    };
    let macro_ = SegmentationScore {
        accuracy: mean_of(&|v| v.score.accuracy),
        edit,
        f1: DEFAULT_F1_THRESHOLDS
            .iter()
            .map(|k| (*k, mean_of(&|v| v.score.f1[k])))
            .collect(),
    };
    Ok(SplitScore {
        videos,
        micro,
        macro_,
    })
}

impl SegmentationScore {
    /// One CSV row in `F1@10,F1@25,F1@50,Edit,Acc` column order.
    pub fn write_csv_row<W: Write>(&self, mut w: W, name: &str) -> std::io::Result<()> {
        write!(w, "{name}")?;
        for k in DEFAULT_F1_THRESHOLDS {
            write!(w, ",{:.2}", self.f1.get(&k).copied().unwrap_or(f64::NAN))?;
        }
        writeln!(w, ",{:.2},{:.2}", self.edit, self.accuracy)
    }
}

pub const SEGMENT_CSV_HEADER: &str = "video,F1@10,F1@25,F1@50,Edit,Acc";

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use GestureLabel::*;

    fn seq(ls: &[GestureLabel]) -> LabelSequence {
        LabelSequence::new(ls.to_vec()).unwrap()
    }

    fn run(label: GestureLabel, start: usize, end: usize) -> Segment {
        Segment { label, start, end }
    }

    #[test]
    fn run_length_encoding() {
        assert_eq!(to_segments(&[G0, G0, G1]), vec![run(G0, 0, 1), run(G1, 2, 2)]);
        assert_eq!(to_segments(&[G2]), vec![run(G2, 0, 0)]);
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(frame_accuracy(&seq(&[G0, G1]), &seq(&[G0, G1])).unwrap(), 100.0);
        assert_eq!(frame_accuracy(&seq(&[G0, G1, G1, G2]), &seq(&[G0, G1, G2, G2])).unwrap(), 75.0);
        assert_eq!(frame_accuracy(&seq(&[G0, G0]), &seq(&[G1, G1])).unwrap(), 0.0);
        assert!(frame_accuracy(&seq(&[G0]), &seq(&[G0, G0])).is_err());
    }

    #[test]
    fn edit_cases() {
        let s = |ls: &[GestureLabel]| to_segments(ls);
        assert_eq!(edit_score(&s(&[G0, G1, G1]), &s(&[G0, G0, G1])), 100.0);
        let e = edit_score(&s(&[G0, G1, G2]), &s(&[G0, G2]));
        assert!((e - 66.67).abs() <= 0.01, "{e}");
        assert_eq!(edit_score(&s(&[G0, G1, G0]), &s(&[G2, G3, G2])), 0.0);
    }

    #[test]
    fn half_overlap_passes_f1_50() {
        let gt = [run(G1, 0, 99)];
        let pred = [run(G1, 0, 49)];
        assert_eq!(f1_at_k(&gt, &pred, 50.0).unwrap(), 100.0);
    }

    #[test]
    fn forty_percent_overlap_fails_f1_50() {
        let gt = [run(G1, 0, 99)];
        let pred = [run(G1, 0, 39)];
        assert_eq!(f1_counts(&gt, &pred, 50.0), F1Counts { tp: 0, fp: 1, fn_: 1 });
        assert_eq!(f1_at_k(&gt, &pred, 50.0).unwrap(), 0.0);
        assert_eq!(f1_at_k(&gt, &pred, 25.0).unwrap(), 100.0);
    }

    #[test]
    fn each_ground_truth_matched_once() {
        let gt = [run(G1, 0, 9)];
        let pred = [run(G1, 0, 4), run(G1, 5, 9)];
        assert_eq!(f1_counts(&gt, &pred, 10.0), F1Counts { tp: 1, fp: 1, fn_: 0 });
    }

    #[test]
    fn labels_must_agree() {
        let gt = [run(G1, 0, 9)];
        let pred = [run(G2, 0, 9)];
        assert_eq!(f1_counts(&gt, &pred, 10.0), F1Counts { tp: 0, fp: 1, fn_: 1 });
    }

    #[test]
    fn invalid_k() {
        assert!(f1_at_k(&[], &[], 0.0).is_err());
        assert!(f1_at_k(&[], &[], 100.0).is_err());
        assert_eq!(f1_at_k(&[], &[], 50.0).unwrap(), 0.0);
    }

    #[test]
    fn background_exclusion() {
        let gt = seq(&[G6, G6, G1, G1, G6]);
        let pred = seq(&[G1, G6, G1, G1, G6]);
        let with_bg = score_video(&gt, &pred, SegmentEvalOptions::default()).unwrap();
        let without = score_video(&gt, &pred, SegmentEvalOptions { exclude_background: true }).unwrap();
        assert_eq!(with_bg.score.accuracy, 80.0);
        assert_eq!(without.score.accuracy, 80.0);
        // gt segments G1 only vs pred G1, G1
        assert_eq!(without.score.edit, 50.0);
        assert_eq!(without.counts[&50], F1Counts { tp: 1, fp: 1, fn_: 0 });
        assert!(with_bg.score.edit < 100.0);
    }

    #[test]
    fn split_micro_and_macro() {
        let a = (seq(&[G0, G0, G1, G1]), seq(&[G0, G0, G1, G1]));
        let b = (seq(&[G2, G2]), seq(&[G3, G3]));
        let s = score_split(&[a, b], SegmentEvalOptions::default()).unwrap();
        assert_eq!(s.videos.len(), 2);
        // pooled: tp 2, fp 1, fn 1 -> 200*2/6
        assert_eq!(s.micro.f1[&50], 200.0 * 2.0 / 6.0);
        assert_eq!(s.macro_.f1[&50], 50.0);
        assert_eq!(s.micro.accuracy, 100.0 * 4.0 / 6.0);
        assert_eq!(s.macro_.accuracy, 50.0);
    }

    #[test]
    fn csv_row() {
        let score = SegmentationScore {
            accuracy: 75.0,
            edit: 66.666666,
            f1: DEFAULT_F1_THRESHOLDS.iter().map(|k| (*k, 50.0)).collect(),
        };
        let mut buf = Vec::new();
        score.write_csv_row(&mut buf, "v1").unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "v1,50.00,50.00,50.00,66.67,75.00\n");
    }

    fn arb_labels(max_len: usize, n_labels: usize) -> impl Strategy<Value = Vec<GestureLabel>> {
        proptest::collection::vec(0..n_labels, 1..max_len)
            .prop_map(|v| v.into_iter().map(|i| GestureLabel::ALL[i]).collect())
    }

    proptest! {
        #[test]
        fn segments_expand_back(labels in arb_labels(200, 4)) {
            let segs = to_segments(&labels);
            let expanded: Vec<GestureLabel> = segs.iter().flat_map(|s| std::iter::repeat_n(s.label, s.len())).collect();
            prop_assert_eq!(expanded, labels);
            prop_assert!(segs.windows(2).all(|w| w[0].label != w[1].label && w[0].end + 1 == w[1].start));
        }

        #[test]
        fn edit_is_symmetric(a in arb_labels(40, 4), b in arb_labels(40, 4)) {
            let (sa, sb) = (to_segments(&a), to_segments(&b));
            prop_assert_eq!(edit_score(&sa, &sb), edit_score(&sb, &sa));
        }

        #[test]
        fn self_comparison_is_perfect(a in arb_labels(60, 5)) {
            let s = seq(&a);
            let v = score_video(&s, &s, SegmentEvalOptions::default()).unwrap();
            prop_assert_eq!(v.score.accuracy, 100.0);
            prop_assert_eq!(v.score.edit, 100.0);
            prop_assert!(v.score.f1.values().all(|f| *f == 100.0));
        }
    }
}

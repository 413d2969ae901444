//! Frame-level and tube-level average precision.
//!
//! Protocol: within an instance (and frame, for frame-AP) detections are
//! visited by descending confidence, ties broken by higher best overlap and
//! then lower slot index. Each detection claims the unclaimed ground truth
//! it overlaps most; it is a true positive iff that overlap is strictly
//! above the threshold. Detections from all instances are then pooled and
//! integrated with all-point interpolation.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::viou;
use crate::geometry::iou;
use crate::types::{EvalInstance, FrameIndex, PredictedTubelet};

/// One instance together with its prediction slots.
#[derive(Debug, Clone, Copy)]
pub struct InstancePredictions<'a> {
    pub instance: &'a EvalInstance,
    pub preds: &'a [PredictedTubelet],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredDetection {
    pub confidence: f64,
    /// Overlap with the claimed ground truth, 0 when nothing was claimed.
    pub overlap: f64,
    pub is_tp: bool,
    pub slot: usize,
}

/// Precision/recall after each detection, by descending confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// `(recall, precision)` pairs.
    pub points: Vec<(f64, f64)>,
    pub num_gt: usize,
}

/// Confidence descending, then best overlap descending, then slot ascending.
fn rank(a: (f64, f64, usize), b: (f64, f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then_with(|| b.1.total_cmp(&a.1))
        .then_with(|| a.2.cmp(&b.2))
}

/// Greedy claiming shared by both AP flavors. `overlaps[d][g]` is the
/// overlap of candidate `d` with ground truth `g`.
fn greedy_claim(confidences: &[f64], slots: &[usize], overlaps: &[Vec<f64>], threshold: f64) -> Vec<ScoredDetection> {
    let best: Vec<f64> = overlaps.iter().map(|o| o.iter().copied().fold(0.0, f64::max)).collect();
    let mut order: Vec<usize> = (0..confidences.len()).collect();
    order.sort_by(|&a, &b| rank((confidences[a], best[a], slots[a]), (confidences[b], best[b], slots[b])));

    let num_gt = overlaps.first().map_or(0, Vec::len);
    let mut claimed = vec![false; num_gt];
    let mut out = Vec::with_capacity(order.len());
    for d in order {
        let candidate = (0..num_gt)
            .filter(|&g| !claimed[g])
            .fold(None::<(usize, f64)>, |acc, g| match acc {
                Some((_, o)) if o >= overlaps[d][g] => acc,
                _ => Some((g, overlaps[d][g])),
            });
        let det = match candidate {
            Some((g, o)) if o > threshold => {
                claimed[g] = true;
                ScoredDetection {
                    confidence: confidences[d],
                    overlap: o,
                    is_tp: true,
                    slot: slots[d],
                }
            }
            _ => ScoredDetection {
                confidence: confidences[d],
                overlap: 0.0,
                is_tp: false,
                slot: slots[d],
            },
        };
        out.push(det);
    }
    out
}

/// Scored per-frame detections of one instance and its ground-truth box count.
///
/// Every frame a slot emits is a detection, scored by its `p_referenced`.
pub fn frame_detections(item: InstancePredictions<'_>, threshold: f64) -> (Vec<ScoredDetection>, usize) {
    let gts = item.instance.tubelets();
    let num_gt = gts.iter().map(|t| t.boxes().len()).sum();
    let frames: BTreeSet<FrameIndex> = gts
        .iter()
        .flat_map(|t| t.boxes().keys().copied())
        .chain(item.preds.iter().flat_map(|p| p.frames().keys().copied()))
        .collect();

    let mut out = Vec::new();
    for t in frames {
        let gt_boxes: Vec<_> = gts.iter().filter_map(|g| g.box_at(t)).collect();
        let mut confidences = Vec::new();
        let mut slots = Vec::new();
        let mut overlaps = Vec::new();
        for p in item.preds {
            if let Some(f) = p.frame(t) {
                confidences.push(f.state_probs.p_referenced());
                slots.push(p.slot());
                overlaps.push(gt_boxes.iter().map(|g| iou(&f.bbox, g)).collect::<Vec<_>>());
            }
        }
        out.extend(greedy_claim(&confidences, &slots, &overlaps, threshold));
    }
    (out, num_gt)
}

/// Scored tube detections of one instance and its ground-truth tubelet count.
///
/// Every slot with a non-empty derived extent is a detection scored by its
/// tube confidence; overlap is vIoU.
pub fn video_detections(item: InstancePredictions<'_>, threshold: f64) -> (Vec<ScoredDetection>, usize) {
    let gts = item.instance.tubelets();
    let tubes: Vec<&PredictedTubelet> = item.preds.iter().filter(|p| !p.derived_extent().is_empty()).collect();
    let confidences: Vec<f64> = tubes.iter().map(|p| p.confidence()).collect();
    let slots: Vec<usize> = tubes.iter().map(|p| p.slot()).collect();
    let overlaps: Vec<Vec<f64>> = tubes.iter().map(|p| gts.iter().map(|g| viou(g, p)).collect()).collect();
    (greedy_claim(&confidences, &slots, &overlaps, threshold), gts.len())
}

impl PrCurve {
    /// Pools detections (already scored per instance) into a curve. The
    /// pooled order is confidence descending, then overlap descending, then
    /// slot ascending; the sort is stable so remaining ties keep input order.
    /// Returns `None` when there is no ground truth.
    pub fn from_detections(mut detections: Vec<ScoredDetection>, num_gt: usize) -> Option<Self> {
        if num_gt == 0 {
            return None;
        }
        detections.sort_by(|a, b| rank((a.confidence, a.overlap, a.slot), (b.confidence, b.overlap, b.slot)));
        let mut tp = 0usize;
        let mut points = Vec::with_capacity(detections.len());
        for (k, d) in detections.iter().enumerate() {
            if d.is_tp {
                tp += 1;
            }
            points.push((tp as f64 / num_gt as f64, tp as f64 / (k + 1) as f64));
        }
        Some(Self { points, num_gt })
    }
}

/// Exact all-point interpolated area under the curve.
pub fn ap_from_curve(curve: &PrCurve) -> f64 {
    let n = curve.points.len();
    let mut envelope = vec![0.0f64; n];
    let mut running = 0.0f64;
    for i in (0..n).rev() {
        running = running.max(curve.points[i].1);
        envelope[i] = running;
    }
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for (i, &(recall, _)) in curve.points.iter().enumerate() {
        if recall > prev_recall {
            area += (recall - prev_recall) * envelope[i];
            prev_recall = recall;
        }
    }
    area
}

fn pooled_ap<'a>(
    items: impl IntoIterator<Item = InstancePredictions<'a>>,
    threshold: f64,
    score: fn(InstancePredictions<'a>, f64) -> (Vec<ScoredDetection>, usize),
) -> f64 {
    let mut all = Vec::new();
    let mut num_gt = 0;
    for item in items {
        let (d, g) = score(item, threshold);
        all.extend(d);
        num_gt += g;
    }
    PrCurve::from_detections(all, num_gt).map_or(0.0, |c| ap_from_curve(&c))
}

/// Dataset-pooled frame-AP at `threshold`; 0 when there is no ground truth.
pub fn frame_ap<'a>(items: impl IntoIterator<Item = InstancePredictions<'a>>, threshold: f64) -> f64 {
    pooled_ap(items, threshold, frame_detections)
}

/// Dataset-pooled video-AP at `threshold`; 0 when there is no ground truth.
pub fn video_ap<'a>(items: impl IntoIterator<Item = InstancePredictions<'a>>, threshold: f64) -> f64 {
    pooled_ap(items, threshold, video_detections)
}

//! Spatio-temporal overlap metrics over matched tubelet pairs, and frame /
//! video average precision over raw detections.

mod ap;

pub use ap::{
    ap_from_curve, frame_ap, frame_detections, video_ap, video_detections, InstancePredictions, PrCurve,
    ScoredDetection,
};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::assignment::MatchedPair;
use crate::geometry::iou;
use crate::types::{FrameIndex, PredictedTubelet, Tubelet};

/// Per-pair overlap scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub viou: f64,
    pub tiou: f64,
}

/// Frame counts of the temporal intersection and union plus the summed
/// per-frame IoU over the intersection.
struct TemporalOverlap {
    intersection: usize,
    union: usize,
    iou_sum: f64,
}

fn temporal_overlap(gt: &Tubelet, pred: &PredictedTubelet) -> TemporalOverlap {
    let extent = pred.derived_extent();
    let gt_frames: BTreeSet<FrameIndex> = gt.frames();
    let mut iou_sum = 0.0;
    let mut intersection = 0usize;
    for t in gt_frames.intersection(&extent) {
        intersection += 1;
        let g = gt.box_at(*t).expect("gt frame");
        let p = pred.frame(*t).expect("extent frame");
        iou_sum += iou(&p.bbox, g);
    }
    let union = gt_frames.union(&extent).count();
    TemporalOverlap {
        intersection,
        union,
        iou_sum,
    }
}

/// Sum of per-frame IoU over the temporal intersection divided by the size
/// of the temporal union.
pub fn viou(gt: &Tubelet, pred: &PredictedTubelet) -> f64 {
    let o = temporal_overlap(gt, pred);
    if o.intersection == 0 {
        0.0
    } else {
        o.iou_sum / o.union as f64
    }
}

/// Temporal IoU between the ground-truth frames and the predicted extent.
pub fn tiou(gt: &Tubelet, pred: &PredictedTubelet) -> f64 {
    let o = temporal_overlap(gt, pred);
    if o.intersection == 0 {
        0.0
    } else {
        o.intersection as f64 / o.union as f64
    }
}

pub fn pair_scores(gt: &Tubelet, pred: &PredictedTubelet) -> PairScores {
    let o = temporal_overlap(gt, pred);
    if o.intersection == 0 {
        return PairScores { viou: 0.0, tiou: 0.0 };
    }
    PairScores {
        viou: o.iou_sum / o.union as f64,
        tiou: o.intersection as f64 / o.union as f64,
    }
}

/// Arithmetic mean, 0 for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Fraction of values strictly greater than `threshold`, 0 for an empty slice.
pub fn fraction_above(values: &[f64], threshold: f64) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().filter(|&&v| v > threshold).count() as f64 / values.len() as f64
    }
}

fn vious(pairs: &[MatchedPair]) -> Vec<f64> {
    pairs.iter().map(|p| viou(&p.gt, &p.pred)).collect()
}

/// Mean vIoU over every matched pair; each tubelet weighs the same
/// regardless of which instance it belongs to. 0 when there are no pairs.
pub fn m_viou(pairs: &[MatchedPair]) -> f64 {
    mean(&vious(pairs))
}

/// Mean tIoU over every matched pair, weighted like [`m_viou`].
pub fn mean_tiou(pairs: &[MatchedPair]) -> f64 {
    let t: Vec<f64> = pairs.iter().map(|p| tiou(&p.gt, &p.pred)).collect();
    mean(&t)
}

/// Fraction of matched pairs with vIoU strictly above `threshold`.
pub fn viou_at_r(pairs: &[MatchedPair], threshold: f64) -> f64 {
    fraction_above(&vious(pairs), threshold)
}

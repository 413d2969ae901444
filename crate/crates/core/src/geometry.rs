//! Box kernels: IoU, generalized IoU, L1 distance and the combined box loss.
//!
//! Boxes are validated on construction, so these functions are total.
//! Areas are always computed from corners so that identical boxes give an
//! IoU of exactly 1.

use crate::config::BoxLossWeights;
use crate::types::BBox;

/// Corner form `(x0, y0, x1, y1)` used for area computations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl CornerBox {
    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }
}

impl From<BBox> for CornerBox {
    fn from(b: BBox) -> Self {
        CornerBox {
            x0: b.cx() - b.w() / 2.0,
            y0: b.cy() - b.h() / 2.0,
            x1: b.cx() + b.w() / 2.0,
            y1: b.cy() + b.h() / 2.0,
        }
    }
}

struct Overlap {
    inter: f64,
    union: f64,
    hull: f64,
}

fn overlap(a: &BBox, b: &BBox) -> Overlap {
    let a = CornerBox::from(*a);
    let b = CornerBox::from(*b);
    let iw = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    let ih = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    let hull = (a.x1.max(b.x1) - a.x0.min(b.x0)) * (a.y1.max(b.y1) - a.y0.min(b.y0));
    Overlap { inter, union, hull }
}

fn ratio(o: &Overlap) -> f64 {
    if o.union <= 0.0 {
        0.0
    } else {
        (o.inter / o.union).clamp(0.0, 1.0)
    }
}

/// Intersection over union; 0 when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    ratio(&overlap(a, b))
}

/// Generalized IoU in `[-1, 1]`; 0 when the enclosing box is empty.
pub fn giou(a: &BBox, b: &BBox) -> f64 {
    let o = overlap(a, b);
    if o.hull <= 0.0 {
        return 0.0;
    }
    let empty = ((o.hull - o.union) / o.hull).max(0.0);
    (ratio(&o) - empty).clamp(-1.0, 1.0)
}

pub fn l1_distance(a: &BBox, b: &BBox) -> f64 {
    (a.cx() - b.cx()).abs() + (a.cy() - b.cy()).abs() + (a.w() - b.w()).abs() + (a.h() - b.h()).abs()
}

/// `l1 * L1(pred, gt) + giou * (1 - gIoU(pred, gt))`.
///
/// Identical boxes cost 0 even when degenerate (where gIoU is 0).
pub fn box_loss(pred: &BBox, gt: &BBox, weights: &BoxLossWeights) -> f64 {
    if pred == gt {
        return 0.0;
    }
    weights.l1 * l1_distance(pred, gt) + weights.giou * (1.0 - giou(pred, gt))
}

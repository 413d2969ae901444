//! Domain types shared by matching, losses and metrics.
//!
//! Every type validates its invariants on construction and is immutable
//! afterwards, so downstream code never re-checks ranges.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Slack allowed when a box edge pokes past the image border.
pub const COORD_SLACK: f64 = 1e-6;

/// Allowed deviation of a three-state distribution from unit mass.
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

/// Normalized axis-aligned box in center form: `(cx, cy, w, h)`, all
/// fractions of the image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::with_slack(cx, cy, w, h, COORD_SLACK)
    }

    pub fn with_slack(cx: f64, cy: f64, w: f64, h: f64, slack: f64) -> Result<Self> {
        for (name, v) in [("cx", cx), ("cy", cy), ("w", w), ("h", h)] {
            if !v.is_finite() {
                return Err(invalid(format!("box {name} is not finite")));
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(format!("box {name} = {v} outside [0, 1]")));
            }
        }
        if cx - w / 2.0 < -slack || cx + w / 2.0 > 1.0 + slack {
            return Err(invalid(format!(
                "box spans x in [{}, {}], outside the image",
                cx - w / 2.0,
                cx + w / 2.0
            )));
        }
        if cy - h / 2.0 < -slack || cy + h / 2.0 > 1.0 + slack {
            return Err(invalid(format!(
                "box spans y in [{}, {}], outside the image",
                cy - h / 2.0,
                cy + h / 2.0
            )));
        }
        Ok(Self { cx, cy, w, h })
    }

    /// Builds a box from corners `(x0, y0, x1, y1)`.
    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        if !(x0 <= x1 && y0 <= y1) {
            return Err(invalid(format!("corners ({x0}, {y0}, {x1}, {y1}) are not ordered")));
        }
        Self::new((x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0)
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    /// The same box with x and y exchanged.
    pub fn transposed(self) -> Self {
        Self {
            cx: self.cy,
            cy: self.cx,
            w: self.h,
            h: self.w,
        }
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = crate::Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

/// Zero-based frame ordinal within a video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrameIndex(pub u32);

impl fmt::Display for FrameIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u32> for FrameIndex {
    fn from(v: u32) -> Self {
        FrameIndex(v)
    }
}

/// A ground-truth referred object tracked over (possibly gapped) frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Tubelet {
    tubelet_id: String,
    category: String,
    boxes: BTreeMap<FrameIndex, BBox>,
}

impl Tubelet {
    pub fn new(
        tubelet_id: impl Into<String>,
        category: impl Into<String>,
        boxes: BTreeMap<FrameIndex, BBox>,
    ) -> Result<Self> {
        let tubelet_id = tubelet_id.into();
        if boxes.is_empty() {
            return Err(invalid(format!("tubelet {tubelet_id} has no boxes")));
        }
        Ok(Self {
            tubelet_id,
            category: category.into(),
            boxes,
        })
    }

    pub fn id(&self) -> &str {
        &self.tubelet_id
    }

    pub fn category(&self) -> &str {
        &self.category
    }

    pub fn boxes(&self) -> &BTreeMap<FrameIndex, BBox> {
        &self.boxes
    }

    pub fn frames(&self) -> BTreeSet<FrameIndex> {
        self.boxes.keys().copied().collect()
    }

    pub fn box_at(&self, frame: FrameIndex) -> Option<&BBox> {
        self.boxes.get(&frame)
    }
}

/// Per-frame state of a predicted box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TubeState {
    Referenced,
    PresentUnreferenced,
    Absent,
}

/// Three-state distribution `(referenced, present-unreferenced, absent)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct StateProbs {
    referenced: f64,
    present_unreferenced: f64,
    absent: f64,
}

impl StateProbs {
    pub fn new(referenced: f64, present_unreferenced: f64, absent: f64) -> Result<Self> {
        for (name, p) in [
            ("p_referenced", referenced),
            ("p_present_unreferenced", present_unreferenced),
            ("p_absent", absent),
        ] {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("{name} = {p} is not a probability")));
            }
        }
        let sum = referenced + present_unreferenced + absent;
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(invalid(format!("state probabilities sum to {sum}, expected 1")));
        }
        Ok(Self {
            referenced,
            present_unreferenced,
            absent,
        })
    }

    pub fn referenced() -> Self {
        Self {
            referenced: 1.0,
            present_unreferenced: 0.0,
            absent: 0.0,
        }
    }

    pub fn absent() -> Self {
        Self {
            referenced: 0.0,
            present_unreferenced: 0.0,
            absent: 1.0,
        }
    }

    pub fn p_referenced(&self) -> f64 {
        self.referenced
    }

    pub fn p_present_unreferenced(&self) -> f64 {
        self.present_unreferenced
    }

    pub fn p_absent(&self) -> f64 {
        self.absent
    }

    pub fn prob(&self, state: TubeState) -> f64 {
        match state {
            TubeState::Referenced => self.referenced,
            TubeState::PresentUnreferenced => self.present_unreferenced,
            TubeState::Absent => self.absent,
        }
    }

    /// Most likely state. Ties resolve toward `Absent`, then toward
    /// `PresentUnreferenced`: a frame is `Referenced` only when that
    /// probability is strictly the largest.
    pub fn argmax(&self) -> TubeState {
        if self.absent >= self.referenced && self.absent >= self.present_unreferenced {
            TubeState::Absent
        } else if self.present_unreferenced >= self.referenced {
            TubeState::PresentUnreferenced
        } else {
            TubeState::Referenced
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.referenced, self.present_unreferenced, self.absent]
    }
}

impl TryFrom<[f64; 3]> for StateProbs {
    type Error = crate::Error;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<StateProbs> for [f64; 3] {
    fn from(p: StateProbs) -> Self {
        p.to_array()
    }
}

/// One frame of a prediction slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotFrame {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub state_probs: StateProbs,
}

/// Output of one tubelet query: a box and state distribution per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedTubelet {
    slot: usize,
    frames: BTreeMap<FrameIndex, SlotFrame>,
}

impl PredictedTubelet {
    pub fn new(slot: usize, frames: BTreeMap<FrameIndex, SlotFrame>) -> Self {
        Self { slot, frames }
    }

    /// A slot that emits nothing.
    pub fn empty(slot: usize) -> Self {
        Self {
            slot,
            frames: BTreeMap::new(),
        }
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn frames(&self) -> &BTreeMap<FrameIndex, SlotFrame> {
        &self.frames
    }

    pub fn frame(&self, frame: FrameIndex) -> Option<&SlotFrame> {
        self.frames.get(&frame)
    }

    /// Frames whose most likely state is `Referenced`.
    pub fn derived_extent(&self) -> BTreeSet<FrameIndex> {
        self.frames
            .iter()
            .filter(|(_, f)| f.state_probs.argmax() == TubeState::Referenced)
            .map(|(&t, _)| t)
            .collect()
    }

    /// Mean `p_referenced` over the derived extent, 0 when the extent is empty.
    pub fn confidence(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for f in self.frames.values() {
            if f.state_probs.argmax() == TubeState::Referenced {
                sum += f.state_probs.p_referenced();
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Video {
    pub video_id: String,
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    pub frame_count: u32,
}

/// One (video, description) query with its ground-truth tubelets.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalInstance {
    pub instance_id: String,
    pub video_id: String,
    pub description: String,
    pub entity_count: Option<u32>,
    tubelets: Vec<Tubelet>,
}

impl EvalInstance {
    pub fn new(
        instance_id: impl Into<String>,
        video_id: impl Into<String>,
        description: impl Into<String>,
        entity_count: Option<u32>,
        tubelets: Vec<Tubelet>,
    ) -> Result<Self> {
        let instance_id = instance_id.into();
        let mut seen = BTreeSet::new();
        for t in &tubelets {
            if !seen.insert(t.id()) {
                return Err(invalid(format!("instance {instance_id} repeats tubelet id {}", t.id())));
            }
        }
        if entity_count == Some(0) {
            return Err(invalid(format!("instance {instance_id} has entity_count 0")));
        }
        Ok(Self {
            instance_id,
            video_id: video_id.into(),
            description: description.into(),
            entity_count,
            tubelets,
        })
    }

    pub fn tubelets(&self) -> &[Tubelet] {
        &self.tubelets
    }
}

//! Seeded synthetic ground truth and predictions for tests and benchmarks.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GroundTruth, Predictions};
use crate::error::{invalid, Result};
use crate::types::{BBox, EvalInstance, FrameIndex, PredictedTubelet, SlotFrame, StateProbs, Tubelet, Video};

const WORDS: &[&str] = &[
    "the", "man", "woman", "child", "dog", "in", "red", "blue", "car", "walking", "next", "to", "a", "bicycle", "who",
    "holds", "ball", "on", "left", "running", "toward", "camera", "white", "cat", "behind", "table",
];

const CATEGORIES: &[&str] = &["person", "dog", "car", "bicycle", "cat", "ball"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub videos: usize,
    pub instances: usize,
    /// Upper bound on tubelets per instance; must not exceed `num_slots`.
    pub max_tubelets: usize,
    pub frames_per_video: u32,
    pub num_slots: usize,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            videos: 10,
            instances: 60,
            max_tubelets: 4,
            frames_per_video: 24,
            num_slots: 15,
        }
    }
}

/// How predictions deviate from the ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorruptionParams {
    /// Corner displacement, as a fraction of half the box size, in `[0, 1]`.
    pub jitter: f64,
    /// Fraction of each tubelet's frames dropped from one end, in `[0, 1)`.
    pub clip_fraction: f64,
    /// Lower bound of the per-frame `p_referenced`, in `(0.5, 1]`.
    pub min_confidence: f64,
    /// Extra slots per instance placed at random.
    pub decoys: usize,
}

impl CorruptionParams {
    /// Corruption that reproduces the ground truth exactly.
    pub fn none() -> Self {
        Self {
            jitter: 0.0,
            clip_fraction: 0.0,
            min_confidence: 1.0,
            decoys: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.jitter) {
            return Err(invalid("jitter must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.clip_fraction) {
            return Err(invalid("clip_fraction must lie in [0, 1)"));
        }
        if !(self.min_confidence > 0.5 && self.min_confidence <= 1.0) {
            return Err(invalid("min_confidence must lie in (0.5, 1]"));
        }
        Ok(())
    }
}

impl Default for CorruptionParams {
    fn default() -> Self {
        Self {
            jitter: 0.3,
            clip_fraction: 0.2,
            min_confidence: 0.6,
            decoys: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSet {
    pub ground_truth: GroundTruth,
    pub perfect: Predictions,
    pub corrupted: Predictions,
}

fn random_box(rng: &mut ChaCha8Rng) -> (f64, f64, f64, f64) {
    let w = rng.random_range(0.05..0.3);
    let h = rng.random_range(0.05..0.3);
    let cx = rng.random_range(w / 2.0..1.0 - w / 2.0);
    let cy = rng.random_range(h / 2.0..1.0 - h / 2.0);
    (cx, cy, w, h)
}

fn clamped_box(cx: f64, cy: f64, w: f64, h: f64) -> BBox {
    let x0 = (cx - w / 2.0).clamp(0.0, 1.0);
    let x1 = (cx + w / 2.0).clamp(0.0, 1.0);
    let y0 = (cy - h / 2.0).clamp(0.0, 1.0);
    let y1 = (cy + h / 2.0).clamp(0.0, 1.0);
    BBox::from_corners(x0, y0, x1, y1).expect("clamped corners form a valid box")
}

fn random_tubelet(rng: &mut ChaCha8Rng, id: String, frames: u32) -> Tubelet {
    let start = rng.random_range(0..frames);
    let len = rng.random_range(1..=frames - start);
    // optional gap in the middle of longer tubelets
    let gap = if len >= 6 && rng.random_bool(0.3) {
        let g0 = start + rng.random_range(2..len - 2);
        Some(g0..(g0 + rng.random_range(1..=2)).min(start + len - 1))
    } else {
        None
    };
    let (cx, cy, w, h) = random_box(rng);
    let (dx, dy) = (rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01));
    let mut boxes = BTreeMap::new();
    for t in start..start + len {
        if gap.as_ref().is_some_and(|g| g.contains(&t)) {
            continue;
        }
        let k = f64::from(t - start);
        let x = (cx + dx * k).clamp(w / 2.0, 1.0 - w / 2.0);
        let y = (cy + dy * k).clamp(h / 2.0, 1.0 - h / 2.0);
        boxes.insert(FrameIndex(t), clamped_box(x, y, w, h));
    }
    let category = CATEGORIES[rng.random_range(0..CATEGORIES.len())];
    Tubelet::new(id, category, boxes).expect("at least one frame")
}

/// Generates a ground-truth set plus perfect and corrupted predictions.
/// The output depends only on `seed` and the parameters.
pub fn generate_synthetic(seed: u64, params: &SyntheticParams, corruption: &CorruptionParams) -> Result<SyntheticSet> {
    if params.videos == 0 || params.instances == 0 || params.frames_per_video == 0 || params.num_slots == 0 {
        return Err(invalid("synthetic counts must be positive"));
    }
    if params.max_tubelets > params.num_slots {
        return Err(invalid("max_tubelets cannot exceed num_slots"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let videos: Vec<Video> = (0..params.videos)
        .map(|v| Video {
            video_id: format!("vid-{v:03}"),
            width: 1280,
            height: 720,
            fps: 25.0,
            frame_count: params.frames_per_video,
        })
        .collect();

    let mut instances = Vec::with_capacity(params.instances);
    for i in 0..params.instances {
        let video = &videos[rng.random_range(0..videos.len())];
        let roll: f64 = rng.random();
        let count = if roll < 0.15 || params.max_tubelets == 0 {
            0
        } else if roll < 0.55 || params.max_tubelets == 1 {
            1
        } else {
            rng.random_range(2..=params.max_tubelets)
        };
        let words = rng.random_range(1..=16);
        let description = (0..words)
            .map(|_| WORDS[rng.random_range(0..WORDS.len())])
            .collect::<Vec<_>>()
            .join(" ");
        let entity_count = rng.random_bool(0.8).then(|| rng.random_range(1..=6));
        let tubelets = (0..count)
            .map(|k| random_tubelet(&mut rng, format!("t{k}"), video.frame_count))
            .collect();
        instances.push(EvalInstance::new(
            format!("inst-{i:05}"),
            video.video_id.clone(),
            description,
            entity_count,
            tubelets,
        )?);
    }
    let ground_truth = GroundTruth { videos, instances };
    let perfect = perfect_predictions(&ground_truth);
    let corrupted = corrupt_predictions(&ground_truth, corruption, seed.wrapping_add(1), params.num_slots)?;
    Ok(SyntheticSet {
        ground_truth,
        perfect,
        corrupted,
    })
}

fn perfect_predictions(gt: &GroundTruth) -> Predictions {
    let sets = gt
        .instances
        .iter()
        .map(|inst| {
            let slots = inst
                .tubelets()
                .iter()
                .enumerate()
                .map(|(k, t)| {
                    let frames = t
                        .boxes()
                        .iter()
                        .map(|(&f, &bbox)| {
                            (
                                f,
                                SlotFrame {
                                    bbox,
                                    state_probs: StateProbs::referenced(),
                                },
                            )
                        })
                        .collect();
                    PredictedTubelet::new(k, frames)
                })
                .collect();
            (inst.instance_id.clone(), slots)
        })
        .collect();
    Predictions {
        sets,
        warnings: Vec::new(),
    }
}

fn jitter_box(b: &BBox, amplitude: f64, u: [f64; 4]) -> BBox {
    if amplitude == 0.0 {
        return *b;
    }
    let (hw, hh) = (b.w() / 2.0, b.h() / 2.0);
    let x0 = (b.cx() - hw + amplitude * u[0] * hw).clamp(0.0, 1.0);
    let x1 = (b.cx() + hw + amplitude * u[1] * hw).clamp(0.0, 1.0);
    let y0 = (b.cy() - hh + amplitude * u[2] * hh).clamp(0.0, 1.0);
    let y1 = (b.cy() + hh + amplitude * u[3] * hh).clamp(0.0, 1.0);
    BBox::from_corners(x0.min(x1), y0.min(y1), x0.max(x1), y0.max(y1)).expect("clamped corners")
}

/// Corrupted copies of the ground truth: slot `k` follows tubelet `k`.
///
/// The random draws do not depend on `jitter`, so two calls that differ only
/// in jitter amplitude displace every corner along the same direction.
pub fn corrupt_predictions(
    gt: &GroundTruth,
    corruption: &CorruptionParams,
    seed: u64,
    num_slots: usize,
) -> Result<Predictions> {
    corruption.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sets = BTreeMap::new();
    for inst in &gt.instances {
        let frame_count = gt.video(&inst.video_id).map_or(1, |v| v.frame_count);
        let mut slots = Vec::new();
        for (k, t) in inst.tubelets().iter().enumerate() {
            let n = t.boxes().len();
            let clip = (corruption.clip_fraction * n as f64).floor() as usize;
            let from_start = rng.random_bool(0.5);
            let keep: Vec<_> = if from_start {
                t.boxes().iter().skip(clip).collect()
            } else {
                t.boxes().iter().take(n - clip).collect()
            };
            let mut frames = BTreeMap::new();
            for (&f, b) in t.boxes() {
                let u = [
                    rng.random_range(-1.0..=1.0),
                    rng.random_range(-1.0..=1.0),
                    rng.random_range(-1.0..=1.0),
                    rng.random_range(-1.0..=1.0),
                ];
                let c: f64 = rng.random();
                if !keep.iter().any(|(kf, _)| **kf == f) {
                    continue;
                }
                let p = corruption.min_confidence + (1.0 - corruption.min_confidence) * c;
                frames.insert(
                    f,
                    SlotFrame {
                        bbox: jitter_box(b, corruption.jitter, u),
                        state_probs: StateProbs::new(p, 0.0, 1.0 - p)?,
                    },
                );
            }
            slots.push(PredictedTubelet::new(k, frames));
        }
        let free = num_slots.saturating_sub(inst.tubelets().len());
        for d in 0..corruption.decoys.min(free) {
            let start = rng.random_range(0..frame_count);
            let len = rng.random_range(1..=(frame_count - start).min(6));
            let (cx, cy, w, h) = random_box(&mut rng);
            let p = rng.random_range(0.55..0.9);
            let frames = (start..start + len)
                .map(|f| {
                    (
                        FrameIndex(f),
                        SlotFrame {
                            bbox: clamped_box(cx, cy, w, h),
                            state_probs: StateProbs::new(p, 0.0, 1.0 - p).expect("valid"),
                        },
                    )
                })
                .collect();
            slots.push(PredictedTubelet::new(inst.tubelets().len() + d, frames));
        }
        sets.insert(inst.instance_id.clone(), slots);
    }
    Ok(Predictions {
        sets,
        warnings: Vec::new(),
    })
}

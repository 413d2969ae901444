use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Weights of the combined L1 + gIoU box loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxLossWeights {
    pub l1: f64,
    pub giou: f64,
}

/// Evaluation and matching configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Number of tubelet queries (prediction slots) per instance.
    pub num_slots: usize,
    pub viou_thresholds: Vec<f64>,
    pub frame_ap_threshold: f64,
    pub video_ap_threshold: f64,
    pub l1_weight: f64,
    pub giou_weight: f64,
    /// Weight of `-log p_referenced` in the per-frame matching cost.
    /// Zero for evaluation matching, one for training-loss mode.
    pub class_cost_weight: f64,
    /// Per-frame cost when only one of ground truth / prediction exists.
    pub existence_mismatch_penalty: f64,
    /// Lower clamp applied to probabilities before taking logs.
    pub log_epsilon: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            num_slots: 15,
            viou_thresholds: vec![0.3, 0.5],
            frame_ap_threshold: 0.5,
            video_ap_threshold: 0.25,
            l1_weight: 5.0,
            giou_weight: 2.0,
            class_cost_weight: 0.0,
            existence_mismatch_penalty: 2.0,
            log_epsilon: 1e-12,
        }
    }
}

impl EvalConfig {
    /// Defaults with the class term enabled in the matching cost.
    pub fn training() -> Self {
        Self {
            class_cost_weight: 1.0,
            ..Self::default()
        }
    }

    pub fn box_weights(&self) -> BoxLossWeights {
        BoxLossWeights {
            l1: self.l1_weight,
            giou: self.giou_weight,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_slots == 0 {
            return Err(invalid("num_slots must be positive"));
        }
        if self.viou_thresholds.is_empty() {
            return Err(invalid("at least one vIoU threshold is required"));
        }
        for (name, r) in self.viou_thresholds.iter().map(|&r| ("viou threshold", r)).chain([
            ("frame-AP threshold", self.frame_ap_threshold),
            ("video-AP threshold", self.video_ap_threshold),
        ]) {
            if !(r > 0.0 && r < 1.0) {
                return Err(invalid(format!("{name} {r} must lie strictly inside (0, 1)")));
            }
        }
        for (name, w) in [
            ("l1_weight", self.l1_weight),
            ("giou_weight", self.giou_weight),
            ("class_cost_weight", self.class_cost_weight),
            ("existence_mismatch_penalty", self.existence_mismatch_penalty),
        ] {
            if !w.is_finite() || w < 0.0 {
                return Err(invalid(format!("{name} = {w} must be finite and non-negative")));
            }
        }
        if !(self.log_epsilon > 0.0 && self.log_epsilon < 1.0) {
            return Err(invalid(format!(
                "log_epsilon = {} must lie in (0, 1)",
                self.log_epsilon
            )));
        }
        Ok(())
    }
}

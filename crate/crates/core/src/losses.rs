//! Reference values for the training objective terms.
//!
//! These are plain numeric functions meant for validating a training
//! framework's implementation, not differentiable components.
//!
//! A slot with no entry at a frame is treated as certainly absent there.
//! When a ground-truth frame has no predicted box at all, the box term is
//! replaced by `existence_mismatch_penalty`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::assignment::{hungarian, slot_columns, Assignment, CostMatrix};
use crate::config::{BoxLossWeights, EvalConfig};
use crate::error::{invalid, Result};
use crate::geometry::box_loss;
use crate::types::{EvalInstance, FrameIndex, PredictedTubelet, StateProbs, TubeState, Tubelet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub l1: f64,
    pub giou: f64,
    pub classification: f64,
    pub temporal: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            l1: 5.0,
            giou: 2.0,
            classification: 3.0,
            temporal: 3.0,
        }
    }
}

impl LossWeights {
    pub fn box_weights(&self) -> BoxLossWeights {
        BoxLossWeights {
            l1: self.l1,
            giou: self.giou,
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            l1: self.l1 * k,
            giou: self.giou * k,
            classification: self.classification * k,
            temporal: self.temporal * k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("l1", self.l1),
            ("giou", self.giou),
            ("classification", self.classification),
            ("temporal", self.temporal),
        ] {
            if !w.is_finite() || w < 0.0 {
                return Err(invalid(format!(
                    "loss weight {name} = {w} must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }
}

fn nll(p: f64, log_epsilon: f64) -> f64 {
    -p.max(log_epsilon).ln()
}

/// Negative log-likelihood of the target state, clamped at `log_epsilon`.
pub fn classification_loss(probs: &StateProbs, target: TubeState, log_epsilon: f64) -> f64 {
    nll(probs.prob(target), log_epsilon)
}

fn check_distribution(name: &str, dist: &[f64]) -> Result<()> {
    if dist.is_empty() {
        return Err(invalid(format!("{name} distribution is empty")));
    }
    if dist.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
        return Err(invalid(format!("{name} distribution has entries outside [0, 1]")));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > crate::types::PROB_SUM_TOLERANCE {
        return Err(invalid(format!("{name} distribution sums to {sum}")));
    }
    Ok(())
}

/// Start/end frame negative log-likelihood for one tubelet.
pub fn temporal_loss(
    start_dist: &[f64],
    end_dist: &[f64],
    gt_start: FrameIndex,
    gt_end: FrameIndex,
    log_epsilon: f64,
) -> Result<f64> {
    check_distribution("start", start_dist)?;
    check_distribution("end", end_dist)?;
    if gt_start > gt_end {
        return Err(invalid(format!("start frame {gt_start} after end frame {gt_end}")));
    }
    let start = *start_dist
        .get(gt_start.0 as usize)
        .ok_or_else(|| invalid(format!("start frame {gt_start} outside {} frames", start_dist.len())))?;
    let end = *end_dist
        .get(gt_end.0 as usize)
        .ok_or_else(|| invalid(format!("end frame {gt_end} outside {} frames", end_dist.len())))?;
    Ok(nll(start, log_epsilon) + nll(end, log_epsilon))
}

/// The two parts of the Hungarian loss, kept apart so callers can weight them.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HungarianLossTerms {
    /// Sum of state negative log-likelihoods.
    pub classification: f64,
    /// Sum of weighted box losses over ground-truth frames.
    pub boxes: f64,
}

impl HungarianLossTerms {
    pub fn total(&self) -> f64 {
        self.classification + self.boxes
    }
}

/// All frames that either side mentions. Frames outside this set contribute
/// nothing: no ground truth and a certainly-absent prediction.
fn frame_universe(instance: &EvalInstance, columns: &[PredictedTubelet]) -> BTreeSet<FrameIndex> {
    instance
        .tubelets()
        .iter()
        .flat_map(|t| t.boxes().keys().copied())
        .chain(columns.iter().flat_map(|p| p.frames().keys().copied()))
        .collect()
}

fn real_row_terms(
    gt: &Tubelet,
    pred: &PredictedTubelet,
    frames: &BTreeSet<FrameIndex>,
    weights: &BoxLossWeights,
    cfg: &EvalConfig,
) -> HungarianLossTerms {
    let mut terms = HungarianLossTerms::default();
    for &t in frames {
        let slot_frame = pred.frame(t);
        let probs = slot_frame.map_or_else(StateProbs::absent, |f| f.state_probs);
        match gt.box_at(t) {
            Some(g) => {
                terms.classification += classification_loss(&probs, TubeState::Referenced, cfg.log_epsilon);
                terms.boxes += match slot_frame {
                    Some(f) => box_loss(&f.bbox, g, weights),
                    None => cfg.existence_mismatch_penalty,
                };
            }
            None => {
                terms.classification += classification_loss(&probs, TubeState::Absent, cfg.log_epsilon);
            }
        }
    }
    terms
}

fn padding_row_class(pred: &PredictedTubelet, frames: &BTreeSet<FrameIndex>, cfg: &EvalConfig) -> f64 {
    frames
        .iter()
        .filter_map(|&t| pred.frame(t))
        .map(|f| classification_loss(&f.state_probs, TubeState::Absent, cfg.log_epsilon))
        .sum()
}

/// Breakdown of the Hungarian loss for a given assignment.
///
/// Rows beyond the ground-truth count are no-object rows: their slot is
/// expected to be absent on every frame and contributes only a class term.
pub fn hungarian_loss_terms(
    instance: &EvalInstance,
    preds: &[PredictedTubelet],
    assignment: &Assignment,
    weights: &LossWeights,
    cfg: &EvalConfig,
) -> Result<HungarianLossTerms> {
    weights.validate()?;
    let columns = slot_columns(instance, preds, cfg)?;
    if assignment.mapping.len() != columns.len() || !assignment.is_bijection() {
        return Err(invalid(format!(
            "assignment over {} rows does not fit the {}-slot problem",
            assignment.mapping.len(),
            columns.len()
        )));
    }
    let frames = frame_universe(instance, &columns);
    let box_weights = weights.box_weights();
    let gts = instance.tubelets();
    let mut total = HungarianLossTerms::default();
    for (row, &col) in assignment.mapping.iter().enumerate() {
        let pred = &columns[col];
        match gts.get(row) {
            Some(gt) => {
                let t = real_row_terms(gt, pred, &frames, &box_weights, cfg);
                total.classification += t.classification;
                total.boxes += t.boxes;
            }
            None => total.classification += padding_row_class(pred, &frames, cfg),
        }
    }
    Ok(total)
}

/// Sum over matched rows and frames of class NLL plus box loss on
/// ground-truth frames.
pub fn hungarian_loss(
    instance: &EvalInstance,
    preds: &[PredictedTubelet],
    assignment: &Assignment,
    weights: &LossWeights,
    cfg: &EvalConfig,
) -> Result<f64> {
    Ok(hungarian_loss_terms(instance, preds, assignment, weights, cfg)?.total())
}

/// Cost matrix whose optimal assignment minimizes [`hungarian_loss`].
///
/// The loss of an assignment equals the padding-row class cost of every slot
/// plus, for each real row `i` matched to slot `k`, the row loss minus that
/// slot's padding cost. Subtracting the padding cost lets the padding rows
/// stay at zero, so the usual padded Hungarian solve applies.
pub fn training_cost_matrix(
    instance: &EvalInstance,
    preds: &[PredictedTubelet],
    weights: &LossWeights,
    cfg: &EvalConfig,
) -> Result<CostMatrix> {
    weights.validate()?;
    let columns = slot_columns(instance, preds, cfg)?;
    let frames = frame_universe(instance, &columns);
    let box_weights = weights.box_weights();
    let padding: Vec<f64> = columns.iter().map(|p| padding_row_class(p, &frames, cfg)).collect();
    let n = columns.len();
    let mut m = CostMatrix::zeros(n, n);
    for (i, gt) in instance.tubelets().iter().enumerate() {
        for (k, pred) in columns.iter().enumerate() {
            let row = real_row_terms(gt, pred, &frames, &box_weights, cfg).total();
            m.set(i, k, row - padding[k]);
        }
    }
    Ok(m)
}

/// Training-mode matching: the assignment that minimizes [`hungarian_loss`].
pub fn match_for_training(
    instance: &EvalInstance,
    preds: &[PredictedTubelet],
    weights: &LossWeights,
    cfg: &EvalConfig,
) -> Result<Assignment> {
    hungarian(&training_cost_matrix(instance, preds, weights, cfg)?)
}

/// Weighted training objective: `classification` scales the state term,
/// `temporal` scales the start/end term, box weights live inside `terms`.
pub fn weighted_objective(terms: &HungarianLossTerms, temporal: f64, weights: &LossWeights) -> f64 {
    weights.classification * terms.classification + terms.boxes + weights.temporal * temporal
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::match_instance;
    use crate::types::{BBox, SlotFrame};
    use approx::assert_abs_diff_eq;

    const EPS: f64 = 1e-12;

    #[test]
    fn classification_examples() {
        assert_eq!(
            classification_loss(&StateProbs::referenced(), TubeState::Referenced, EPS),
            0.0
        );
        let third = 1.0 / 3.0;
        let uniform = StateProbs::new(third, third, third).unwrap();
        for s in [TubeState::Referenced, TubeState::PresentUnreferenced, TubeState::Absent] {
            assert_abs_diff_eq!(classification_loss(&uniform, s, EPS), 3f64.ln(), epsilon = 1e-12);
        }
        let clamped = classification_loss(&StateProbs::absent(), TubeState::Referenced, EPS);
        assert!(clamped.is_finite());
        assert_eq!(clamped, -EPS.ln());
    }

    #[test]
    fn temporal_examples() {
        let one_hot = |n: usize, at: usize| (0..n).map(|i| if i == at { 1.0 } else { 0.0 }).collect::<Vec<_>>();
        assert_eq!(
            temporal_loss(&one_hot(8, 2), &one_hot(8, 5), FrameIndex(2), FrameIndex(5), EPS).unwrap(),
            0.0
        );
        let uniform = vec![0.1; 10];
        assert_abs_diff_eq!(
            temporal_loss(&uniform, &uniform, FrameIndex(0), FrameIndex(9), EPS).unwrap(),
            2.0 * 10f64.ln(),
            epsilon = 1e-12
        );
        assert_eq!(
            temporal_loss(&one_hot(8, 0), &one_hot(8, 0), FrameIndex(3), FrameIndex(4), EPS).unwrap(),
            -2.0 * EPS.ln()
        );
    }

    #[test]
    fn temporal_input_errors() {
        let d = vec![0.25; 4];
        assert!(temporal_loss(&d, &d, FrameIndex(0), FrameIndex(4), EPS).is_err());
        assert!(temporal_loss(&d, &d, FrameIndex(3), FrameIndex(1), EPS).is_err());
        assert!(temporal_loss(&[0.5, 0.6], &d, FrameIndex(0), FrameIndex(1), EPS).is_err());
        assert!(temporal_loss(&[], &d, FrameIndex(0), FrameIndex(1), EPS).is_err());
    }

    fn bx(cx: f64) -> BBox {
        BBox::new(cx, 0.5, 0.1, 0.1).unwrap()
    }

    fn gt(id: &str, frames: &[u32], cx: f64) -> Tubelet {
        Tubelet::new(id, "thing", frames.iter().map(|&t| (FrameIndex(t), bx(cx))).collect()).unwrap()
    }

    fn pred(slot: usize, frames: &[u32], cx: f64, probs: StateProbs) -> PredictedTubelet {
        PredictedTubelet::new(
            slot,
            frames
                .iter()
                .map(|&t| {
                    (
                        FrameIndex(t),
                        SlotFrame {
                            bbox: bx(cx),
                            state_probs: probs,
                        },
                    )
                })
                .collect(),
        )
    }

    fn cfg(slots: usize) -> EvalConfig {
        EvalConfig {
            num_slots: slots,
            ..EvalConfig::training()
        }
    }

    #[test]
    fn perfect_predictions_cost_nothing() {
        let inst = EvalInstance::new("i", "v", "x", None, vec![gt("a", &[0, 1], 0.3), gt("b", &[1, 2], 0.7)]).unwrap();
        let preds = vec![
            pred(0, &[0, 1], 0.3, StateProbs::referenced()),
            pred(1, &[1, 2], 0.7, StateProbs::referenced()),
        ];
        let c = cfg(4);
        let a = match_instance(&inst, &preds, &c).unwrap().assignment;
        assert_eq!(
            hungarian_loss(&inst, &preds, &a, &LossWeights::default(), &c).unwrap(),
            0.0
        );
    }

    #[test]
    fn single_frame_half_confidence() {
        let inst = EvalInstance::new("i", "v", "x", None, vec![gt("a", &[0], 0.5)]).unwrap();
        let preds = vec![pred(0, &[0], 0.5, StateProbs::new(0.5, 0.0, 0.5).unwrap())];
        let c = cfg(1);
        let a = match_instance(&inst, &preds, &c).unwrap().assignment;
        let loss = hungarian_loss(&inst, &preds, &a, &LossWeights::default(), &c).unwrap();
        assert_abs_diff_eq!(loss, 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn zero_gt_with_absent_slots() {
        let inst = EvalInstance::new("i", "v", "x", None, vec![]).unwrap();
        let preds: Vec<_> = (0..3).map(|k| pred(k, &[0, 1, 2], 0.5, StateProbs::absent())).collect();
        let c = cfg(3);
        let a = match_instance(&inst, &preds, &c).unwrap().assignment;
        assert_eq!(
            hungarian_loss(&inst, &preds, &a, &LossWeights::default(), &c).unwrap(),
            0.0
        );
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let inst = EvalInstance::new("i", "v", "x", None, vec![gt("a", &[0], 0.5)]).unwrap();
        let bad = Assignment {
            mapping: vec![0, 1],
            total_cost: 0.0,
        };
        assert!(hungarian_loss(&inst, &[], &bad, &LossWeights::default(), &cfg(3)).is_err());
        let not_perm = Assignment {
            mapping: vec![0, 0, 1],
            total_cost: 0.0,
        };
        assert!(hungarian_loss(&inst, &[], &not_perm, &LossWeights::default(), &cfg(3)).is_err());
    }

    #[test]
    fn missing_predicted_box_uses_penalty() {
        let inst = EvalInstance::new("i", "v", "x", None, vec![gt("a", &[0, 1], 0.5)]).unwrap();
        let preds = vec![pred(0, &[0], 0.5, StateProbs::referenced())];
        let c = cfg(1);
        let a = Assignment {
            mapping: vec![0],
            total_cost: 0.0,
        };
        let terms = hungarian_loss_terms(&inst, &preds, &a, &LossWeights::default(), &c).unwrap();
        assert_eq!(terms.boxes, c.existence_mismatch_penalty);
        assert_eq!(terms.classification, -EPS.ln());
    }

    #[test]
    fn weight_scaling_scales_box_term() {
        let inst = EvalInstance::new("i", "v", "x", None, vec![gt("a", &[0, 1], 0.5)]).unwrap();
        let preds = vec![pred(0, &[0, 1], 0.55, StateProbs::referenced())];
        let c = cfg(2);
        let a = match_instance(&inst, &preds, &c).unwrap().assignment;
        let w = LossWeights::default();
        let base = hungarian_loss(&inst, &preds, &a, &w, &c).unwrap();
        assert!(base > 0.0);
        for k in [0.5, 2.0, 7.0] {
            let scaled = hungarian_loss(&inst, &preds, &a, &w.scaled(k), &c).unwrap();
            assert_abs_diff_eq!(scaled, k * base, epsilon = 1e-12 * k * base);
        }
    }

    #[test]
    fn objective_weights_each_term() {
        let terms = HungarianLossTerms {
            classification: 1.5,
            boxes: 2.0,
        };
        assert_eq!(
            weighted_objective(&terms, 0.5, &LossWeights::default()),
            3.0 * 1.5 + 2.0 + 3.0 * 0.5
        );
    }
}

//! Tubelet matching, reference losses and evaluation metrics for detecting
//! the objects a free-form description refers to across the frames of a video.
//!
//! Boxes are normalized `(cx, cy, w, h)`. A ground-truth [`Tubelet`] is a
//! gapped series of boxes; a [`PredictedTubelet`] is one prediction slot with
//! a box and a three-way state distribution per frame.

pub mod assignment;
pub mod config;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod losses;
pub mod metrics;
pub mod report;
pub mod types;

pub use assignment::{
    brute_force_assignment, brute_force_padded, hungarian, match_instance, match_tubelets, tubelet_cost_matrix,
    Assignment, CostMatrix, MatchedPair,
};
pub use config::{BoxLossWeights, EvalConfig};
pub use dataset::{
    bucketize, parse_ground_truth, parse_predictions, Bucket, BucketDimension, GroundTruth, Predictions,
};
pub use error::{Diagnostic, Diagnostics, Error, Result};
pub use geometry::{box_loss, giou, iou, l1_distance};
pub use losses::{classification_loss, hungarian_loss, match_for_training, temporal_loss, LossWeights};
pub use metrics::{frame_ap, m_viou, mean_tiou, tiou, video_ap, viou, viou_at_r};
pub use report::{evaluate, evaluate_documents, evaluate_files, render_report, EvalOptions, Format, MetricsReport};
pub use types::{BBox, EvalInstance, FrameIndex, PredictedTubelet, SlotFrame, StateProbs, TubeState, Tubelet, Video};

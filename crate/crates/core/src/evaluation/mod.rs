//! Detection quality measurement.
//!
//! * [`coco_summary`]: COCO-style mAP / AP50 / AP75 / AR@100 over the four
//!   severity groups, with greedy score-ordered matching and 101-point
//!   interpolated precision.
//! * [`detection_confusion_matrix`]: a 5x5 matrix whose extra column counts
//!   missed ground truth and whose extra row counts spurious detections.
//! * [`collapse_to_cavity`] and [`roc_sweep`]: cavity vs non-cavity
//!   sensitivity/specificity as the detector score threshold moves.
//!
//! Only images present in the ground truth are evaluated; detections for
//! unknown image ids are ignored.

mod coco;
mod confusion;

use thiserror::Error;

pub use coco::{
    average_precision, coco_summary, match_detections, AccumulatedDetection, CocoOptions, EvalReport, GroupMetrics,
    MatchResult, MatchedDetection, COCO_IOU_THRESHOLDS, MAX_DETECTIONS_PER_IMAGE,
};
pub use confusion::{
    collapse_to_cavity, detection_confusion_matrix, in_dentist_band, roc_csv, roc_sweep, CavityConfusion,
    DetectionConfusionMatrix, Rate, RocPoint, DENTIST_SENSITIVITY_BAND, DENTIST_SPECIFICITY_BAND, MISSED, SPURIOUS,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("thresholds must be finite and strictly decreasing (position {position})")]
    NonMonotoneThresholds { position: usize },
    #[error("schema error: {0}")]
    Schema(#[from] crate::dataset::DatasetError),
    #[error("csv output failed: {0}")]
    Csv(String),
}

/// Arithmetic mean of latency samples in milliseconds; `None` when empty.
pub fn mean_latency_ms(samples: &[f64]) -> Option<f64> {
    if samples.is_empty() {
        None
    } else {
        Some(samples.iter().sum::<f64>() / samples.len() as f64)
    }
}

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::dataset::{AnnotationRecord, DetectionSet};
use crate::detection::{Detection, SeverityGroup};

/// Column index of the extra "missed ground truth" column.
pub const MISSED: usize = 4;
/// Row index of the extra "spurious detection" row.
pub const SPURIOUS: usize = 4;

pub const DENTIST_SENSITIVITY_BAND: (f64, f64) = (0.77, 1.00);
pub const DENTIST_SPECIFICITY_BAND: (f64, f64) = (0.45, 0.93);

/// (K+1)x(K+1) detection confusion matrix with K = 4 severity groups.
///
/// Rows are ground-truth groups plus [`SPURIOUS`]; columns are predicted
/// groups plus [`MISSED`]. The `(SPURIOUS, MISSED)` corner is always zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DetectionConfusionMatrix {
    pub counts: [[u64; 5]; 5],
}

impl DetectionConfusionMatrix {
    pub const ROW_LABELS: [&'static str; 5] = ["normal", "level1", "level2", "other", "spurious"];
    pub const COLUMN_LABELS: [&'static str; 5] = ["normal", "level1", "level2", "other", "missed"];

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.counts[row][col]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn dimension(&self) -> usize {
        self.counts.len()
    }
}

impl std::ops::AddAssign for DetectionConfusionMatrix {
    fn add_assign(&mut self, rhs: Self) {
        for (r, row) in self.counts.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell += rhs.counts[r][c];
            }
        }
    }
}

fn image_matrix(gt: &AnnotationRecord, dets: &[&Detection], iou_threshold: f64) -> DetectionConfusionMatrix {
    let gt_boxes = gt.grouped();
    let mut m = DetectionConfusionMatrix::default();
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut taken = vec![false; gt_boxes.len()];
    for d in order {
        let det = dets[d];
        let mut best: Option<(usize, f64)> = None;
        for (g, (bbox, _)) in gt_boxes.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let iou = det.bbox.iou(bbox);
            if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        match best {
            Some((g, _)) => {
                taken[g] = true;
                m.counts[gt_boxes[g].1.index()][det.group.index()] += 1;
            }
            None => m.counts[SPURIOUS][det.group.index()] += 1,
        }
    }
    for (g, (_, group)) in gt_boxes.iter().enumerate() {
        if !taken[g] {
            m.counts[group.index()][MISSED] += 1;
        }
    }
    m
}

/// Group-agnostic greedy matching: each detection, by descending score, pairs
/// with the unmatched ground truth of highest IoU at or above the threshold,
/// whatever the groups. A wrong-group detection on a real tooth is therefore
/// a misclassification, not a spurious box.
pub fn detection_confusion_matrix(
    gt: &[AnnotationRecord],
    dets: &DetectionSet,
    iou_threshold: f64,
) -> DetectionConfusionMatrix {
    filtered_matrix(gt, dets, iou_threshold, f64::NEG_INFINITY)
}

fn filtered_matrix(
    gt: &[AnnotationRecord],
    dets: &DetectionSet,
    iou_threshold: f64,
    min_score: f64,
) -> DetectionConfusionMatrix {
    let mut total = DetectionConfusionMatrix::default();
    for record in gt {
        let image_dets: Vec<&Detection> =
            dets.get(&record.image_id).map(|v| v.iter().filter(|d| d.score >= min_score).collect()).unwrap_or_default();
        total += image_matrix(record, &image_dets, iou_threshold);
    }
    total
}

/// Cavity (level1 + level2) vs non-cavity (normal + other) counts.
///
/// Missed cavity teeth are false negatives and spurious cavity calls are
/// false positives. A missed non-cavity tooth received no cavity call, so it
/// is a true negative. Spurious non-cavity boxes make no claim about any
/// tooth and are kept aside in `spurious_non_cavity`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CavityConfusion {
    pub true_positive: u64,
    pub false_negative: u64,
    pub false_positive: u64,
    pub true_negative: u64,
    pub spurious_non_cavity: u64,
}

/// A ratio with the 0/0 case reported as 1.0 and flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub value: f64,
    pub undefined: bool,
}

impl Rate {
    fn of(num: u64, den: u64) -> Self {
        if den == 0 {
            Rate { value: 1.0, undefined: true }
        } else {
            Rate { value: num as f64 / den as f64, undefined: false }
        }
    }
}

impl CavityConfusion {
    pub fn sensitivity(&self) -> Rate {
        Rate::of(self.true_positive, self.true_positive + self.false_negative)
    }

    pub fn specificity(&self) -> Rate {
        Rate::of(self.true_negative, self.true_negative + self.false_positive)
    }

    /// 2x2 total plus the folded spurious non-cavity count.
    pub fn total(&self) -> u64 {
        self.true_positive + self.false_negative + self.false_positive + self.true_negative + self.spurious_non_cavity
    }
}

pub fn collapse_to_cavity(m: &DetectionConfusionMatrix) -> CavityConfusion {
    let mut out = CavityConfusion::default();
    for row in 0..5 {
        for col in 0..5 {
            let n = m.counts[row][col];
            if n == 0 {
                continue;
            }
            let truth = SeverityGroup::from_index(row).map(SeverityGroup::is_cavity);
            let called = SeverityGroup::from_index(col).is_some_and(SeverityGroup::is_cavity);
            match (truth, called) {
                (Some(true), true) => out.true_positive += n,
                (Some(true), false) => out.false_negative += n,
                (Some(false), true) => out.false_positive += n,
                (Some(false), false) => out.true_negative += n,
                (None, true) => out.false_positive += n,
                (None, false) => out.spurious_non_cavity += n,
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub score_threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub sensitivity_undefined: bool,
    pub specificity_undefined: bool,
}

impl RocPoint {
    pub fn in_dentist_band(&self) -> bool {
        in_dentist_band(self.sensitivity, self.specificity)
    }
}

/// True iff the point lies in the published range of dentist performance
/// (inclusive on all edges).
pub fn in_dentist_band(sensitivity: f64, specificity: f64) -> bool {
    let (s0, s1) = DENTIST_SENSITIVITY_BAND;
    let (p0, p1) = DENTIST_SPECIFICITY_BAND;
    (s0..=s1).contains(&sensitivity) && (p0..=p1).contains(&specificity)
}

/// Sweeps the detector score threshold. For each threshold, detections with
/// `score >= t` are rematched, collapsed to cavity/non-cavity, and scored.
pub fn roc_sweep(
    gt: &[AnnotationRecord],
    dets: &DetectionSet,
    thresholds: &[f64],
    iou_threshold: f64,
) -> Result<Vec<RocPoint>, EvalError> {
    for (i, t) in thresholds.iter().enumerate() {
        if !t.is_finite() || (i > 0 && *t >= thresholds[i - 1]) {
            return Err(EvalError::NonMonotoneThresholds { position: i });
        }
    }
    Ok(thresholds
        .iter()
        .map(|&t| {
            let c = collapse_to_cavity(&filtered_matrix(gt, dets, iou_threshold, t));
            let (sens, spec) = (c.sensitivity(), c.specificity());
            RocPoint {
                score_threshold: t,
                sensitivity: sens.value,
                specificity: spec.value,
                sensitivity_undefined: sens.undefined,
                specificity_undefined: spec.undefined,
            }
        })
        .collect())
}

/// CSV with columns `threshold,sensitivity,specificity`.
pub fn roc_csv(points: &[RocPoint]) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["threshold", "sensitivity", "specificity"]).map_err(|e| EvalError::Csv(e.to_string()))?;
    for p in points {
        w.write_record([p.score_threshold.to_string(), p.sensitivity.to_string(), p.specificity.to_string()])
            .map_err(|e| EvalError::Csv(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| EvalError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| EvalError::Csv(e.to_string()))
}

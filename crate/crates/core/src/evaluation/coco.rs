use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotationRecord, DetectionSet};
use crate::detection::{Detection, SeverityGroup};
use crate::geometry::BoundingBox;

pub const COCO_IOU_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];
pub const MAX_DETECTIONS_PER_IMAGE: usize = 100;
const RECALL_POINTS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedDetection {
    /// Index into the image's detection list.
    pub det_index: usize,
    pub score: f64,
    /// Index into the image's ground-truth list.
    pub gt_index: Option<usize>,
    pub iou: f64,
}

/// Greedy matching of one image and one group at one IoU threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub group: SeverityGroup,
    pub iou_threshold: f64,
    pub gt_count: usize,
    /// Detections of the group in score order, capped per image.
    pub matches: Vec<MatchedDetection>,
    pub unmatched_gt: Vec<usize>,
}

/// Score-ordered detection indices of one group, ties kept in input order.
fn ranked(dets: &[Detection], group: SeverityGroup) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].group == group).collect();
    idx.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    idx.truncate(MAX_DETECTIONS_PER_IMAGE);
    idx
}

/// For each detection row, the ground-truth column it takes, if any.
fn greedy(ious: &[Vec<f64>], gt_count: usize, threshold: f64) -> Vec<Option<(usize, f64)>> {
    let mut taken = vec![false; gt_count];
    ious.iter()
        .map(|row| {
            let mut best: Option<(usize, f64)> = None;
            for (g, &iou) in row.iter().enumerate() {
                if taken[g] || iou < threshold {
                    continue;
                }
                if best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
            }
            best
        })
        .collect()
}

struct ImageGroup {
    gt_indices: Vec<usize>,
    det_order: Vec<usize>,
    ious: Vec<Vec<f64>>,
}

impl ImageGroup {
    fn new(gt: &[(BoundingBox, SeverityGroup)], dets: &[Detection], group: SeverityGroup) -> Self {
        let gt_indices: Vec<usize> = (0..gt.len()).filter(|&i| gt[i].1 == group).collect();
        let det_order = ranked(dets, group);
        let ious =
            det_order.iter().map(|&d| gt_indices.iter().map(|&g| dets[d].bbox.iou(&gt[g].0)).collect()).collect();
        Self { gt_indices, det_order, ious }
    }

    fn result(&self, dets: &[Detection], group: SeverityGroup, threshold: f64) -> MatchResult {
        let assigned = greedy(&self.ious, self.gt_indices.len(), threshold);
        let mut matched_gt = vec![false; self.gt_indices.len()];
        let matches = self
            .det_order
            .iter()
            .zip(&assigned)
            .map(|(&d, a)| {
                if let Some((g, _)) = a {
                    matched_gt[*g] = true;
                }
                MatchedDetection {
                    det_index: d,
                    score: dets[d].score,
                    gt_index: a.map(|(g, _)| self.gt_indices[g]),
                    iou: a.map_or(0.0, |(_, iou)| iou),
                }
            })
            .collect();
        let unmatched_gt = self.gt_indices.iter().zip(&matched_gt).filter(|(_, m)| !**m).map(|(&g, _)| g).collect();
        MatchResult { group, iou_threshold: threshold, gt_count: self.gt_indices.len(), matches, unmatched_gt }
    }
}

/// Matches one image's detections of `group` against its ground truth of the
/// same group. Each detection, in descending score order, takes the unmatched
/// ground truth with the highest IoU at or above `iou_threshold`.
pub fn match_detections(
    gt: &[(BoundingBox, SeverityGroup)],
    dets: &[Detection],
    group: SeverityGroup,
    iou_threshold: f64,
) -> MatchResult {
    ImageGroup::new(gt, dets, group).result(dets, group, iou_threshold)
}

/// A detection pooled across the dataset for one group and threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccumulatedDetection {
    pub score: f64,
    pub is_true_positive: bool,
}

/// 101-point interpolated average precision.
///
/// Detections are ranked by score (stable). For each recall level
/// `r in {0, 0.01, ..., 1}` the interpolated precision is the best precision at
/// any rank whose recall reaches `r`; the AP is their mean. Recall levels are
/// compared in exact integer arithmetic. Returns 0 when `gt_count` is 0.
pub fn average_precision(detections: &[AccumulatedDetection], gt_count: usize) -> f64 {
    if gt_count == 0 || detections.is_empty() {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score));
    let mut tp_cum = Vec::with_capacity(order.len());
    let mut precision = Vec::with_capacity(order.len());
    let mut tp = 0u64;
    for (rank, &i) in order.iter().enumerate() {
        if detections[i].is_true_positive {
            tp += 1;
        }
        tp_cum.push(tp);
        precision.push(tp as f64 / (rank + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let n = gt_count as u64;
    let total: f64 = (0..=RECALL_POINTS)
        .map(|r| {
            let first = tp_cum.partition_point(|&t| t * RECALL_POINTS < r * n);
            precision.get(first).copied().unwrap_or(0.0)
        })
        .sum();
    total / (RECALL_POINTS + 1) as f64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CocoOptions {
    /// Leave the `other` group out of every average.
    pub exclude_other: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub group: SeverityGroup,
    pub gt_count: usize,
    pub detection_count: usize,
    /// `None` when the group has no ground truth.
    #[serde(rename = "AP")]
    pub ap: Option<f64>,
    #[serde(rename = "AP50")]
    pub ap50: Option<f64>,
    #[serde(rename = "AP75")]
    pub ap75: Option<f64>,
    #[serde(rename = "AR")]
    pub ar: Option<f64>,
}

/// Headline metrics named after the usual COCO summary columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "mAP")]
    pub map: f64,
    #[serde(rename = "AP50")]
    pub ap50: f64,
    #[serde(rename = "AP75")]
    pub ap75: f64,
    #[serde(rename = "AR")]
    pub ar: f64,
    pub per_group: Vec<GroupMetrics>,
    pub mean_latency_ms: Option<f64>,
    pub image_count: usize,
    pub exclude_other: bool,
}

/// COCO-style summary over the four severity groups.
///
/// mAP averages AP over groups with ground truth and the ten IoU thresholds
/// 0.50:0.05:0.95; AP50/AP75 fix the threshold; AR is recall with at most 100
/// detections per image and group, averaged the same way as mAP.
pub fn coco_summary(
    gt: &[AnnotationRecord],
    dets: &DetectionSet,
    latency_samples: &[f64],
    options: &CocoOptions,
) -> EvalReport {
    let t_count = COCO_IOU_THRESHOLDS.len();
    let empty: Vec<Detection> = Vec::new();
    let mut per_group = Vec::with_capacity(4);
    let mut ap_table: Vec<Vec<f64>> = Vec::new();
    let mut ar_table: Vec<Vec<f64>> = Vec::new();

    for group in SeverityGroup::ALL {
        let mut pooled: Vec<Vec<AccumulatedDetection>> = vec![Vec::new(); t_count];
        let mut matched: Vec<usize> = vec![0; t_count];
        let mut gt_count = 0usize;
        for record in gt {
            let gt_boxes = record.grouped();
            let image_dets = dets.get(&record.image_id).unwrap_or(&empty);
            let ig = ImageGroup::new(&gt_boxes, image_dets, group);
            gt_count += ig.gt_indices.len();
            for (t, &thr) in COCO_IOU_THRESHOLDS.iter().enumerate() {
                let assigned = greedy(&ig.ious, ig.gt_indices.len(), thr);
                for (&d, a) in ig.det_order.iter().zip(&assigned) {
                    pooled[t].push(AccumulatedDetection { score: image_dets[d].score, is_true_positive: a.is_some() });
                }
                matched[t] += assigned.iter().filter(|a| a.is_some()).count();
            }
        }
        let detection_count = pooled[0].len();
        let included = gt_count > 0 && !(options.exclude_other && group == SeverityGroup::Other);
        let metrics = if gt_count > 0 {
            let aps: Vec<f64> = pooled.iter().map(|p| average_precision(p, gt_count)).collect();
            let ars: Vec<f64> = matched.iter().map(|&m| m as f64 / gt_count as f64).collect();
            let m = GroupMetrics {
                group,
                gt_count,
                detection_count,
                ap: Some(aps.iter().sum::<f64>() / t_count as f64),
                ap50: Some(aps[0]),
                ap75: Some(aps[5]),
                ar: Some(ars.iter().sum::<f64>() / t_count as f64),
            };
            if included {
                ap_table.push(aps);
                ar_table.push(ars);
            }
            m
        } else {
            GroupMetrics { group, gt_count, detection_count, ap: None, ap50: None, ap75: None, ar: None }
        };
        per_group.push(metrics);
    }

    let mean_over = |table: &[Vec<f64>], pick: &dyn Fn(&Vec<f64>) -> f64| {
        if table.is_empty() {
            0.0
        } else {
            table.iter().map(pick).sum::<f64>() / table.len() as f64
        }
    };
    let all = |row: &Vec<f64>| row.iter().sum::<f64>() / row.len() as f64;
    EvalReport {
        map: mean_over(&ap_table, &all),
        ap50: mean_over(&ap_table, &|row| row[0]),
        ap75: mean_over(&ap_table, &|row| row[5]),
        ar: mean_over(&ar_table, &all),
        per_group,
        mean_latency_ms: super::mean_latency_ms(latency_samples),
        image_count: gt.len(),
        exclude_other: options.exclude_other,
    }
}

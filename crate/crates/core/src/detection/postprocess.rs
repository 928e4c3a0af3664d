use serde::{Deserialize, Serialize};

use super::anchors::{generate_anchors, Anchor, AnchorConfig};
use super::{group_class, Detection, DetectionError, SeverityGroup, ToothClass};
use crate::geometry::BoundingBox;

/// Largest exponent fed to `exp` when decoding sizes; keeps corners finite.
const MAX_SIZE_EXPONENT: f64 = 60.0;

/// Class axis of the head output. Index 0 is always background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLayout {
    /// Background + the four severity groups.
    #[default]
    Grouped,
    /// Background + the eight ICDAS-level tooth classes.
    Icdas,
}

impl ClassLayout {
    pub fn logits_per_anchor(self) -> usize {
        match self {
            ClassLayout::Grouped => 1 + SeverityGroup::ALL.len(),
            ClassLayout::Icdas => 1 + ToothClass::ALL.len(),
        }
    }

    /// Group of the non-background logit at `index` (1-based).
    fn group_of(self, index: usize) -> SeverityGroup {
        match self {
            ClassLayout::Grouped => SeverityGroup::ALL[index - 1],
            ClassLayout::Icdas => group_class(ToothClass::ALL[index - 1]),
        }
    }
}

/// Per-anchor class logits and `(dcx, dcy, dw, dh)` box offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawModelOutput {
    layout: ClassLayout,
    logits: Vec<f64>,
    offsets: Vec<[f64; 4]>,
}

impl RawModelOutput {
    /// `logits` is row-major `[anchor][class]`.
    pub fn new(layout: ClassLayout, logits: Vec<f64>, offsets: Vec<[f64; 4]>) -> Result<Self, DetectionError> {
        let expected = offsets.len() * layout.logits_per_anchor();
        if logits.len() != expected {
            return Err(DetectionError::ShapeMismatch(format!(
                "{} logits for {} anchors with {} classes each",
                logits.len(),
                offsets.len(),
                layout.logits_per_anchor()
            )));
        }
        Ok(Self { layout, logits, offsets })
    }

    pub fn layout(&self) -> ClassLayout {
        self.layout
    }

    pub fn anchor_count(&self) -> usize {
        self.offsets.len()
    }

    pub fn logits_for(&self, anchor: usize) -> &[f64] {
        let w = self.layout.logits_per_anchor();
        &self.logits[anchor * w..(anchor + 1) * w]
    }

    pub fn offsets(&self) -> &[[f64; 4]] {
        &self.offsets
    }
}

fn check_lengths(raw: &RawModelOutput, anchors: &[Anchor]) -> Result<(), DetectionError> {
    if raw.anchor_count() != anchors.len() {
        return Err(DetectionError::ShapeMismatch(format!(
            "model produced {} anchors, layout has {}",
            raw.anchor_count(),
            anchors.len()
        )));
    }
    Ok(())
}

fn decode_one(anchor: &Anchor, offset: &[f64; 4], config: &AnchorConfig) -> Anchor {
    let [dcx, dcy, dw, dh] = *offset;
    Anchor {
        cx: anchor.cx + dcx * config.center_variance * anchor.w,
        cy: anchor.cy + dcy * config.center_variance * anchor.h,
        w: anchor.w * (dw * config.size_variance).min(MAX_SIZE_EXPONENT).exp(),
        h: anchor.h * (dh * config.size_variance).min(MAX_SIZE_EXPONENT).exp(),
    }
}

/// Decoded boxes in center form, before clamping.
pub fn decode_centers(
    raw: &RawModelOutput,
    anchors: &[Anchor],
    config: &AnchorConfig,
) -> Result<Vec<Anchor>, DetectionError> {
    check_lengths(raw, anchors)?;
    anchors
        .iter()
        .zip(raw.offsets())
        .enumerate()
        .map(|(i, (a, o))| {
            if o.iter().any(|v| !v.is_finite()) {
                return Err(DetectionError::NonFiniteOutput { anchor: i });
            }
            Ok(decode_one(a, o, config))
        })
        .collect()
}

/// Decoded boxes in clamped corner form.
pub fn decode_boxes(
    raw: &RawModelOutput,
    anchors: &[Anchor],
    config: &AnchorConfig,
) -> Result<Vec<BoundingBox>, DetectionError> {
    Ok(decode_centers(raw, anchors, config)?.iter().map(Anchor::to_box).collect())
}

/// Indices kept by greedy per-group suppression, in keep order.
///
/// Candidates are visited by descending score, ties by ascending input
/// index. A candidate survives iff its IoU with every survivor of the same
/// group is at most `iou_threshold`.
pub fn nms_indices(candidates: &[Detection], iou_threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| candidates[b].score.total_cmp(&candidates[a].score).then(a.cmp(&b)));
    let mut kept_by_group: [Vec<usize>; 4] = Default::default();
    let mut kept = Vec::new();
    for i in order {
        let c = &candidates[i];
        let same = &mut kept_by_group[c.group.index()];
        if same.iter().all(|&k| candidates[k].bbox.iou(&c.bbox) <= iou_threshold) {
            same.push(i);
            kept.push(i);
        }
    }
    kept
}

/// Greedy per-group non-maximum suppression; output sorted by descending score.
pub fn nms(candidates: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    nms_indices(candidates, iou_threshold).into_iter().map(|i| candidates[i]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostprocessParams {
    pub score_threshold: f64,
    pub iou_threshold: f64,
    pub max_detections: usize,
}

impl Default for PostprocessParams {
    fn default() -> Self {
        Self { score_threshold: 0.5, iou_threshold: 0.5, max_detections: 100 }
    }
}

impl PostprocessParams {
    pub fn validate(&self) -> Result<(), DetectionError> {
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(DetectionError::InvalidParams("score_threshold must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.iou_threshold) {
            return Err(DetectionError::InvalidParams("iou_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

fn softmax_into(logits: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.extend(logits.iter().map(|l| (l - max).exp()));
    let sum: f64 = out.iter().sum();
    for p in out.iter_mut() {
        *p /= sum;
    }
}

/// Softmax, background drop, grouping, score filter, per-group NMS and
/// truncation to the `max_detections` best scores.
///
/// For the ICDAS layout a group's score is the summed probability of its
/// member classes.
pub fn postprocess(
    raw: &RawModelOutput,
    anchors: &[Anchor],
    config: &AnchorConfig,
    params: &PostprocessParams,
) -> Result<Vec<Detection>, DetectionError> {
    check_lengths(raw, anchors)?;
    params.validate()?;
    let layout = raw.layout();
    let mut probs = Vec::with_capacity(layout.logits_per_anchor());
    let mut candidates = Vec::new();
    for (i, anchor) in anchors.iter().enumerate() {
        let logits = raw.logits_for(i);
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(DetectionError::NonFiniteOutput { anchor: i });
        }
        softmax_into(logits, &mut probs);
        let mut group_scores = [0.0f64; 4];
        for (k, p) in probs.iter().enumerate().skip(1) {
            group_scores[layout.group_of(k).index()] += p;
        }
        if group_scores.iter().all(|&s| s < params.score_threshold) {
            continue;
        }
        let offset = &raw.offsets()[i];
        if offset.iter().any(|v| !v.is_finite()) {
            return Err(DetectionError::NonFiniteOutput { anchor: i });
        }
        let bbox = decode_one(anchor, offset, config).to_box();
        for (g, &score) in group_scores.iter().enumerate() {
            if score >= params.score_threshold {
                candidates.push(Detection { bbox, group: SeverityGroup::ALL[g], score: score.min(1.0) });
            }
        }
    }
    let mut kept = nms(&candidates, params.iou_threshold);
    kept.truncate(params.max_detections);
    Ok(kept)
}

/// Anchors, anchor layout and thresholds bundled for repeated per-frame use.
#[derive(Debug, Clone)]
pub struct Postprocessor {
    config: AnchorConfig,
    params: PostprocessParams,
    anchors: Vec<Anchor>,
}

impl Postprocessor {
    pub fn new(config: AnchorConfig, params: PostprocessParams) -> Result<Self, DetectionError> {
        params.validate()?;
        let anchors = generate_anchors(&config)?;
        Ok(Self { config, params, anchors })
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn config(&self) -> &AnchorConfig {
        &self.config
    }

    pub fn params(&self) -> &PostprocessParams {
        &self.params
    }

    pub fn run(&self, raw: &RawModelOutput) -> Result<Vec<Detection>, DetectionError> {
        postprocess(raw, &self.anchors, &self.config, &self.params)
    }
}

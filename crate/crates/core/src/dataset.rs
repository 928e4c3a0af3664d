//! Annotation and detection files, class census, class weighting and
//! train/test splitting.
//!
//! Both interchange files share one envelope:
//!
//! ```json
//! { "images": [ { "image_id": "img-001", "width": 640, "height": 480,
//!                 "boxes": [ { "x_min": 0.1, "y_min": 0.2, "x_max": 0.3, "y_max": 0.4,
//!                              "tooth_class": "code3" } ] } ] }
//! ```
//!
//! Detection files carry `"group"` and `"score"` per box instead of
//! `"tooth_class"`; `width`/`height` are optional there.

use std::collections::{BTreeMap, HashSet};
use std::ops::Add;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{Detection, SeverityGroup, ToothClass};
use crate::geometry::{BoundingBox, PixelSize};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("image id {0:?} appears more than once")]
    DuplicateImageId(String),
    #[error("image {image_id:?}, box {index}: {reason}")]
    InvalidBox { image_id: String, index: usize, reason: String },
    #[error("image {image_id:?}: {reason}")]
    InvalidImage { image_id: String, reason: String },
    #[error("dataset has no boxes")]
    EmptyDataset,
    #[error("need at least 2 records to split, got {0}")]
    TooFewRecords(usize),
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for DatasetError {
    fn from(e: serde_json::Error) -> Self {
        DatasetError::Parse { line: e.line(), column: e.column(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedBox {
    #[serde(flatten)]
    pub bbox: BoundingBox,
    pub tooth_class: ToothClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub image_size: PixelSize,
    pub boxes: Vec<AnnotatedBox>,
}

impl AnnotationRecord {
    /// Ground truth reduced to severity groups.
    pub fn grouped(&self) -> Vec<(BoundingBox, SeverityGroup)> {
        self.boxes.iter().map(|b| (b.bbox, b.tooth_class.group())).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    images: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct RawBoxCoords {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl RawBoxCoords {
    fn validate(&self, image_id: &str, index: usize) -> Result<BoundingBox, DatasetError> {
        BoundingBox::new(self.x_min, self.y_min, self.x_max, self.y_max).map_err(|e| DatasetError::InvalidBox {
            image_id: image_id.to_string(),
            index,
            reason: e.to_string(),
        })
    }

    fn from_box(b: &BoundingBox) -> Self {
        Self { x_min: b.x_min(), y_min: b.y_min(), x_max: b.x_max(), y_max: b.y_max() }
    }
}

#[derive(Serialize, Deserialize)]
struct RawAnnotationBox {
    #[serde(flatten)]
    coords: RawBoxCoords,
    tooth_class: ToothClass,
}

#[derive(Serialize, Deserialize)]
struct RawAnnotationImage {
    image_id: String,
    width: u32,
    height: u32,
    boxes: Vec<RawAnnotationBox>,
}

#[derive(Serialize, Deserialize)]
struct RawDetectionBox {
    #[serde(flatten)]
    coords: RawBoxCoords,
    group: SeverityGroup,
    score: f64,
}

#[derive(Serialize, Deserialize)]
struct RawDetectionImage {
    image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    height: Option<u32>,
    boxes: Vec<RawDetectionBox>,
}

/// Parses and validates an annotation document.
pub fn load_annotations(text: &str) -> Result<Vec<AnnotationRecord>, DatasetError> {
    let env: Envelope<RawAnnotationImage> = serde_json::from_str(text)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(env.images.len());
    for img in env.images {
        if !seen.insert(img.image_id.clone()) {
            return Err(DatasetError::DuplicateImageId(img.image_id));
        }
        let image_size = PixelSize::new(img.width, img.height)
            .map_err(|e| DatasetError::InvalidImage { image_id: img.image_id.clone(), reason: e.to_string() })?;
        let boxes = img
            .boxes
            .iter()
            .enumerate()
            .map(|(i, b)| Ok(AnnotatedBox { bbox: b.coords.validate(&img.image_id, i)?, tooth_class: b.tooth_class }))
            .collect::<Result<_, DatasetError>>()?;
        out.push(AnnotationRecord { image_id: img.image_id, image_size, boxes });
    }
    Ok(out)
}

pub fn save_annotations(records: &[AnnotationRecord]) -> String {
    let env = Envelope {
        images: records
            .iter()
            .map(|r| RawAnnotationImage {
                image_id: r.image_id.clone(),
                width: r.image_size.width,
                height: r.image_size.height,
                boxes: r
                    .boxes
                    .iter()
                    .map(|b| RawAnnotationBox { coords: RawBoxCoords::from_box(&b.bbox), tooth_class: b.tooth_class })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&env).expect("annotation envelope serializes")
}

/// Detections keyed by image id.
pub type DetectionSet = BTreeMap<String, Vec<Detection>>;

pub fn load_detections(text: &str) -> Result<DetectionSet, DatasetError> {
    let env: Envelope<RawDetectionImage> = serde_json::from_str(text)?;
    let mut out = DetectionSet::new();
    for img in env.images {
        if out.contains_key(&img.image_id) {
            return Err(DatasetError::DuplicateImageId(img.image_id));
        }
        let dets = img
            .boxes
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let bbox = b.coords.validate(&img.image_id, i)?;
                Detection::new(bbox, b.group, b.score).map_err(|e| DatasetError::InvalidBox {
                    image_id: img.image_id.clone(),
                    index: i,
                    reason: e.to_string(),
                })
            })
            .collect::<Result<_, DatasetError>>()?;
        out.insert(img.image_id, dets);
    }
    Ok(out)
}

pub fn save_detections(set: &DetectionSet) -> String {
    let env = Envelope {
        images: set
            .iter()
            .map(|(id, dets)| RawDetectionImage {
                image_id: id.clone(),
                width: None,
                height: None,
                boxes: dets
                    .iter()
                    .map(|d| RawDetectionBox {
                        coords: RawBoxCoords::from_box(&d.bbox),
                        group: d.group,
                        score: d.score,
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&env).expect("detection envelope serializes")
}

/// Box counts per ICDAS class. Also the schema of a census file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassCounts {
    pub normal: u64,
    pub code1: u64,
    pub code2: u64,
    pub code3: u64,
    pub code4: u64,
    pub code5: u64,
    pub code6: u64,
    pub other: u64,
}

impl ClassCounts {
    pub fn get(&self, c: ToothClass) -> u64 {
        match c {
            ToothClass::Normal => self.normal,
            ToothClass::Code1 => self.code1,
            ToothClass::Code2 => self.code2,
            ToothClass::Code3 => self.code3,
            ToothClass::Code4 => self.code4,
            ToothClass::Code5 => self.code5,
            ToothClass::Code6 => self.code6,
            ToothClass::Other => self.other,
        }
    }

    fn slot(&mut self, c: ToothClass) -> &mut u64 {
        match c {
            ToothClass::Normal => &mut self.normal,
            ToothClass::Code1 => &mut self.code1,
            ToothClass::Code2 => &mut self.code2,
            ToothClass::Code3 => &mut self.code3,
            ToothClass::Code4 => &mut self.code4,
            ToothClass::Code5 => &mut self.code5,
            ToothClass::Code6 => &mut self.code6,
            ToothClass::Other => &mut self.other,
        }
    }

    pub fn total(&self) -> u64 {
        ToothClass::ALL.iter().map(|&c| self.get(c)).sum()
    }
}

/// One value per severity group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroupTable<T> {
    pub normal: T,
    pub level1: T,
    pub level2: T,
    pub other: T,
}

impl<T: Copy> GroupTable<T> {
    pub fn from_fn(mut f: impl FnMut(SeverityGroup) -> T) -> Self {
        Self {
            normal: f(SeverityGroup::Normal),
            level1: f(SeverityGroup::Level1),
            level2: f(SeverityGroup::Level2),
            other: f(SeverityGroup::Other),
        }
    }

    pub fn get(&self, g: SeverityGroup) -> T {
        match g {
            SeverityGroup::Normal => self.normal,
            SeverityGroup::Level1 => self.level1,
            SeverityGroup::Level2 => self.level2,
            SeverityGroup::Other => self.other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetStats {
    pub image_count: u64,
    pub total_boxes: u64,
    pub class_counts: ClassCounts,
    pub group_counts: GroupTable<u64>,
}

impl DatasetStats {
    /// Stats from a bare census; the image count is unknown and left at 0.
    pub fn from_class_counts(class_counts: ClassCounts) -> Self {
        let group_counts = GroupTable::from_fn(|g| {
            ToothClass::ALL.iter().filter(|c| c.group() == g).map(|&c| class_counts.get(c)).sum()
        });
        Self { image_count: 0, total_boxes: class_counts.total(), class_counts, group_counts }
    }
}

impl Add for DatasetStats {
    type Output = DatasetStats;

    fn add(self, rhs: Self) -> Self {
        let mut counts = self.class_counts;
        for c in ToothClass::ALL {
            *counts.slot(c) += rhs.class_counts.get(c);
        }
        let mut out = DatasetStats::from_class_counts(counts);
        out.image_count = self.image_count + rhs.image_count;
        out
    }
}

pub fn compute_stats(records: &[AnnotationRecord]) -> DatasetStats {
    let mut counts = ClassCounts::default();
    for b in records.iter().flat_map(|r| &r.boxes) {
        *counts.slot(b.tooth_class) += 1;
    }
    let mut stats = DatasetStats::from_class_counts(counts);
    stats.image_count = records.len() as u64;
    stats
}

/// Inverse-frequency group weights.
///
/// Over the groups present (`n_g > 0`), `raw_g = T / (G * n_g)` where `T` is
/// their box total and `G` their number; `weights` divides `raw` by its
/// mean so the present groups average exactly 1. Absent groups get 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub weights: GroupTable<f64>,
    pub raw: GroupTable<f64>,
    pub raw_mean: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub zero_count_groups: Vec<SeverityGroup>,
}

pub fn class_weights(stats: &DatasetStats) -> Result<ClassWeights, DatasetError> {
    let present: Vec<SeverityGroup> =
        SeverityGroup::ALL.into_iter().filter(|&g| stats.group_counts.get(g) > 0).collect();
    if present.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let total: u64 = present.iter().map(|&g| stats.group_counts.get(g)).sum();
    let groups = present.len() as f64;
    let raw = GroupTable::from_fn(|g| match stats.group_counts.get(g) {
        0 => 0.0,
        n => total as f64 / (groups * n as f64),
    });
    let raw_mean = present.iter().map(|&g| raw.get(g)).sum::<f64>() / groups;
    let weights = GroupTable::from_fn(|g| raw.get(g) / raw_mean);
    let zero_count_groups: Vec<SeverityGroup> =
        SeverityGroup::ALL.into_iter().filter(|g| !present.contains(g)).collect();
    for g in &zero_count_groups {
        log::warn!("group {g} has no boxes; its class weight is 0");
    }
    Ok(ClassWeights { weights, raw, raw_mean, zero_count_groups })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        Self { train_fraction: 0.8, seed }
    }
}

/// Seeded image-level split. Records are ordered by image id before
/// shuffling, so the result depends only on the id set and the seed.
/// The first `min(ceil(fraction * N), N - 1)` shuffled images go to train/val.
pub fn split(
    records: &[AnnotationRecord],
    spec: &SplitSpec,
) -> Result<(Vec<AnnotationRecord>, Vec<AnnotationRecord>), DatasetError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(DatasetError::InvalidFraction(spec.train_fraction));
    }
    if records.len() < 2 {
        return Err(DatasetError::TooFewRecords(records.len()));
    }
    let mut order: Vec<&AnnotationRecord> = records.iter().collect();
    order.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);
    let n = records.len();
    // Nudged down so products like 0.8 * 10 are not pushed up by round-off;
    // capped so the test side is never empty.
    let n_train = ((spec.train_fraction * n as f64 - 1e-9).ceil() as usize).min(n - 1);
    let train = order[..n_train].iter().map(|r| (*r).clone()).collect();
    let test = order[n_train..].iter().map(|r| (*r).clone()).collect();
    Ok((train, test))
}

//! SSD-style cavity detection post-processing.
//!
//! The network itself sits behind [`DetectorBackend`]; everything after its
//! raw head output (anchor generation, offset decoding, softmax, grouping,
//! per-group non-maximum suppression) is implemented here.

mod anchors;
mod backend;
mod postprocess;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundingBox, GeometryError};

pub use anchors::{generate_anchors, Anchor, AnchorConfig};
pub use backend::{
    BackendConcurrency, BackendError, DetectorBackend, FrameInput, MockAnchorEntry, MockDetector, MockFixture,
    MockFrame,
};
pub use postprocess::{
    decode_boxes, decode_centers, nms, nms_indices, postprocess, ClassLayout, PostprocessParams, Postprocessor,
    RawModelOutput,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectionError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid anchor configuration: {0}")]
    InvalidAnchorConfig(String),
    #[error("invalid post-processing parameter: {0}")]
    InvalidParams(String),
    #[error("model output contains a non-finite value at anchor {anchor}")]
    NonFiniteOutput { anchor: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// ICDAS-coded tooth label, plus `normal` and `other` (braces, crowns).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToothClass {
    Normal,
    Code1,
    Code2,
    Code3,
    Code4,
    Code5,
    Code6,
    Other,
}

impl ToothClass {
    pub const ALL: [ToothClass; 8] = [
        ToothClass::Normal,
        ToothClass::Code1,
        ToothClass::Code2,
        ToothClass::Code3,
        ToothClass::Code4,
        ToothClass::Code5,
        ToothClass::Code6,
        ToothClass::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ToothClass::Normal => "normal",
            ToothClass::Code1 => "code1",
            ToothClass::Code2 => "code2",
            ToothClass::Code3 => "code3",
            ToothClass::Code4 => "code4",
            ToothClass::Code5 => "code5",
            ToothClass::Code6 => "code6",
            ToothClass::Other => "other",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn group(self) -> SeverityGroup {
        group_class(self)
    }
}

/// The four training categories: ICDAS codes 1-2 and 3-6 are pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeverityGroup {
    Normal,
    Level1,
    Level2,
    Other,
}

impl SeverityGroup {
    pub const ALL: [SeverityGroup; 4] =
        [SeverityGroup::Normal, SeverityGroup::Level1, SeverityGroup::Level2, SeverityGroup::Other];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SeverityGroup::Normal => "normal",
            SeverityGroup::Level1 => "level1",
            SeverityGroup::Level2 => "level2",
            SeverityGroup::Other => "other",
        }
    }

    pub fn is_cavity(self) -> bool {
        matches!(self, SeverityGroup::Level1 | SeverityGroup::Level2)
    }

    /// Clinical ordering used for "worst finding": normal < other < level1 < level2.
    pub fn severity_rank(self) -> u8 {
        match self {
            SeverityGroup::Normal => 0,
            SeverityGroup::Other => 1,
            SeverityGroup::Level1 => 2,
            SeverityGroup::Level2 => 3,
        }
    }

    /// Overlay color: green, yellow, red, white.
    pub fn overlay_color(self) -> &'static str {
        match self {
            SeverityGroup::Normal => "green",
            SeverityGroup::Level1 => "yellow",
            SeverityGroup::Level2 => "red",
            SeverityGroup::Other => "white",
        }
    }
}

impl std::fmt::Display for SeverityGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub fn group_class(c: ToothClass) -> SeverityGroup {
    match c {
        ToothClass::Normal => SeverityGroup::Normal,
        ToothClass::Code1 | ToothClass::Code2 => SeverityGroup::Level1,
        ToothClass::Code3 | ToothClass::Code4 | ToothClass::Code5 | ToothClass::Code6 => SeverityGroup::Level2,
        ToothClass::Other => SeverityGroup::Other,
    }
}

/// One located tooth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(flatten)]
    pub bbox: BoundingBox,
    pub group: SeverityGroup,
    pub score: f64,
}

impl Detection {
    pub fn new(bbox: BoundingBox, group: SeverityGroup, score: f64) -> Result<Self, DetectionError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(DetectionError::InvalidParams(format!("score {score} outside [0, 1]")));
        }
        Ok(Self { bbox, group, score })
    }
}

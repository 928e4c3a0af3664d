use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::postprocess::{ClassLayout, RawModelOutput};
use crate::gating::PixelRect;
use crate::geometry::PixelSize;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend has no output for image {0}")]
    UnknownImage(String),
    #[error("backend failed: {0}")]
    Failed(String),
    #[error("backend fixture is invalid: {0}")]
    InvalidFixture(String),
    #[error("cannot read backend fixture: {0}")]
    Io(#[from] std::io::Error),
}

/// Whether a backend tolerates concurrent `infer` calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendConcurrency {
    Concurrent,
    /// Callers must queue requests; the service holds a lock around `infer`.
    Serialized,
}

/// What the detector is asked to look at: the gated crop of one frame.
#[derive(Debug, Clone, Copy)]
pub struct FrameInput<'a> {
    pub image_id: &'a str,
    pub image_size: PixelSize,
    pub crop: PixelRect,
    /// Encoded image bytes, when the caller uploaded them.
    pub pixels: Option<&'a [u8]>,
}

/// Seam for the neural network. Implementations return raw SSD head output
/// laid out for the anchor configuration they were built against.
pub trait DetectorBackend: Send + Sync {
    fn infer(&self, frame: &FrameInput<'_>) -> Result<RawModelOutput, BackendError>;

    fn descriptor(&self) -> String;

    fn concurrency(&self) -> BackendConcurrency {
        BackendConcurrency::Concurrent
    }
}

/// One scripted anchor in a mock fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockAnchorEntry {
    pub index: usize,
    pub logits: Vec<f64>,
    #[serde(default)]
    pub offsets: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MockFrame {
    #[serde(default)]
    pub anchors: Vec<MockAnchorEntry>,
    /// Makes `infer` fail for this image, to exercise error paths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail: Option<String>,
}

/// Sparse fixture: anchors not listed get `background_logit` on the
/// background class, zeros elsewhere, and zero offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockFixture {
    #[serde(default)]
    pub layout: ClassLayout,
    #[serde(default = "default_background_logit")]
    pub background_logit: f64,
    #[serde(default)]
    pub serialized: bool,
    pub images: BTreeMap<String, MockFrame>,
}

fn default_background_logit() -> f64 {
    10.0
}

/// Deterministic backend replaying scripted outputs keyed by image id.
#[derive(Debug, Clone)]
pub struct MockDetector {
    fixture: MockFixture,
    anchor_count: usize,
}

impl MockDetector {
    pub fn new(fixture: MockFixture, anchor_count: usize) -> Result<Self, BackendError> {
        let width = fixture.layout.logits_per_anchor();
        for (id, frame) in &fixture.images {
            for entry in &frame.anchors {
                if entry.index >= anchor_count {
                    return Err(BackendError::InvalidFixture(format!(
                        "image {id}: anchor index {} out of range (layout has {anchor_count})",
                        entry.index
                    )));
                }
                if entry.logits.len() != width {
                    return Err(BackendError::InvalidFixture(format!(
                        "image {id}: anchor {} has {} logits, expected {width}",
                        entry.index,
                        entry.logits.len()
                    )));
                }
            }
        }
        Ok(Self { fixture, anchor_count })
    }

    pub fn from_json(text: &str, anchor_count: usize) -> Result<Self, BackendError> {
        let fixture: MockFixture =
            serde_json::from_str(text).map_err(|e| BackendError::InvalidFixture(e.to_string()))?;
        Self::new(fixture, anchor_count)
    }

    pub fn from_path(path: &Path, anchor_count: usize) -> Result<Self, BackendError> {
        Self::from_json(&std::fs::read_to_string(path)?, anchor_count)
    }

    pub fn fixture(&self) -> &MockFixture {
        &self.fixture
    }
}

impl DetectorBackend for MockDetector {
    fn infer(&self, frame: &FrameInput<'_>) -> Result<RawModelOutput, BackendError> {
        let scripted = self
            .fixture
            .images
            .get(frame.image_id)
            .ok_or_else(|| BackendError::UnknownImage(frame.image_id.to_string()))?;
        if let Some(reason) = &scripted.fail {
            return Err(BackendError::Failed(reason.clone()));
        }
        let width = self.fixture.layout.logits_per_anchor();
        let mut logits = vec![0.0; self.anchor_count * width];
        for row in logits.chunks_mut(width) {
            row[0] = self.fixture.background_logit;
        }
        let mut offsets = vec![[0.0; 4]; self.anchor_count];
        for entry in &scripted.anchors {
            logits[entry.index * width..(entry.index + 1) * width].copy_from_slice(&entry.logits);
            offsets[entry.index] = entry.offsets;
        }
        RawModelOutput::new(self.fixture.layout, logits, offsets).map_err(|e| BackendError::Failed(e.to_string()))
    }

    fn descriptor(&self) -> String {
        format!(
            "mock ({} scripted images, {:?} layout, {} anchors)",
            self.fixture.images.len(),
            self.fixture.layout,
            self.anchor_count
        )
    }

    fn concurrency(&self) -> BackendConcurrency {
        if self.fixture.serialized {
            BackendConcurrency::Serialized
        } else {
            BackendConcurrency::Concurrent
        }
    }
}

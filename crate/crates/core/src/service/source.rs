use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use crate::dataset::{load_detections, DetectionSet};
use crate::detection::{
    AnchorConfig, BackendConcurrency, BackendError, Detection, DetectorBackend, FrameInput, MockDetector,
    PostprocessParams, Postprocessor,
};

use super::store::lock;
use super::ServiceError;

/// Where detections come from once a frame passes the gate.
pub enum DetectionSource {
    /// A model backend followed by decode + NMS.
    Backend {
        backend: Arc<dyn DetectorBackend>,
        postprocessor: Postprocessor,
        /// Held around `infer` for backends that cannot run concurrently.
        gate: Mutex<()>,
    },
    /// Detections computed elsewhere, keyed by image id.
    Precomputed(DetectionSet),
}

/// Detections for one frame plus the post-processing time, when measured.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectOutcome {
    pub detections: Vec<Detection>,
    pub postprocess_ms: Option<f64>,
}

impl DetectionSource {
    pub fn backend(backend: Arc<dyn DetectorBackend>, postprocessor: Postprocessor) -> Self {
        Self::Backend { backend, postprocessor, gate: Mutex::new(()) }
    }

    /// Mock backend over the given anchor layout.
    pub fn mock(fixture: &Path, anchors: AnchorConfig, params: PostprocessParams) -> Result<Self, ServiceError> {
        let postprocessor = Postprocessor::new(anchors, params).map_err(|e| ServiceError::Config(e.to_string()))?;
        let mock = MockDetector::from_path(fixture, postprocessor.anchors().len())
            .map_err(|e| ServiceError::Config(format!("{}: {e}", fixture.display())))?;
        Ok(Self::backend(Arc::new(mock), postprocessor))
    }

    pub fn detections_file(path: &Path) -> Result<Self, ServiceError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let set = load_detections(&text).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self::Precomputed(set))
    }

    pub fn descriptor(&self) -> String {
        match self {
            Self::Backend { backend, .. } => backend.descriptor(),
            Self::Precomputed(set) => format!("detections file ({} images)", set.len()),
        }
    }

    pub fn detect(&self, frame: &FrameInput<'_>) -> Result<DetectOutcome, ServiceError> {
        match self {
            Self::Precomputed(set) => set
                .get(frame.image_id)
                .map(|d| DetectOutcome { detections: d.clone(), postprocess_ms: None })
                .ok_or_else(|| backend_failure(BackendError::UnknownImage(frame.image_id.to_string()))),
            Self::Backend { backend, postprocessor, gate } => {
                let raw = match backend.concurrency() {
                    BackendConcurrency::Serialized => {
                        let _held = lock(gate);
                        backend.infer(frame)
                    }
                    BackendConcurrency::Concurrent => backend.infer(frame),
                }
                .map_err(backend_failure)?;
                let start = Instant::now();
                let detections = postprocessor.run(&raw).map_err(|e| ServiceError::BackendFailure {
                    message: format!("backend output rejected: {e}"),
                    retryable: false,
                })?;
                Ok(DetectOutcome { detections, postprocess_ms: Some(start.elapsed().as_secs_f64() * 1e3) })
            }
        }
    }
}

fn backend_failure(e: BackendError) -> ServiceError {
    let retryable = matches!(e, BackendError::Failed(_) | BackendError::Io(_));
    ServiceError::BackendFailure { message: e.to_string(), retryable }
}

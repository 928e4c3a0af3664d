//! Screening sessions: gate a frame, detect, collect the questionnaire, and
//! fuse everything into a report.
//!
//! [`ScreeningService`] holds the logic and is usable in-process (the CLI's
//! `simulate` drives it directly); [`router`] puts it behind HTTP.
//!
//! Session states only move forward, `New -> Gated -> Detected -> Assessed ->
//! Closed`, with one exception: a rejected frame sends a `Gated` session back
//! to `New`. Frames are accepted only before detection has succeeded; a new
//! screening needs a new session.

mod http;
mod source;
mod store;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;

use base64::Engine as _;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{AnchorConfig, Detection, FrameInput, PostprocessParams};
use crate::evaluation::mean_latency_ms;
use crate::gating::{
    crop_region, evaluate_gate, GateConfig, GateDecision, GateVerdict, Landmark, LandmarkSet, PixelRect,
};
use crate::geometry::PixelSize;
use crate::resources::{
    nearby_clinics, score_quiz, ClinicRegistry, NearbyClinic, PublicQuizItem, QuizBank, QuizScore, ResourceError,
};
use crate::risk::{
    assess, score_questionnaire, QuestionnaireForm, QuestionnaireResponse, QuestionnaireScore, RiskError, RiskReport,
};

pub use http::router;
pub use source::{DetectOutcome, DetectionSource};
pub use store::SessionStore;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("cannot {operation} while session is {state:?}")]
    InvalidState { state: SessionState, operation: &'static str },
    #[error("no detection pass has completed for this session")]
    NotReady,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Resource(#[from] ResourceError),
    #[error("detector failed: {message}")]
    BackendFailure { message: String, retryable: bool },
    #[error("session storage unavailable: {0}")]
    StorageUnavailable(String),
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SessionState {
    New,
    Gated,
    Detected,
    Assessed,
    Closed,
}

/// One submitted frame and how the gate judged it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub image_id: String,
    pub image_size: PixelSize,
    pub decision: GateDecision,
}

/// The frame region handed to the detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropReference {
    pub image_id: String,
    pub image_size: PixelSize,
    pub rect: PixelRect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub state: SessionState,
    pub frames: Vec<FrameRecord>,
    pub crop: Option<CropReference>,
    /// Normalized to the crop, not the full frame.
    pub detections: Option<Vec<Detection>>,
    pub questionnaire: Option<QuestionnaireResponse>,
    pub questionnaire_score: Option<QuestionnaireScore>,
    pub report: Option<RiskReport>,
    /// Post-processing time of each detection pass, milliseconds.
    #[serde(default)]
    pub latency_ms: Vec<f64>,
}

impl Session {
    fn new() -> Self {
        Self {
            session_id: uuid::Uuid::new_v4().simple().to_string(),
            created_at: Utc::now(),
            state: SessionState::New,
            frames: Vec::new(),
            crop: None,
            detections: None,
            questionnaire: None,
            questionnaire_score: None,
            report: None,
            latency_ms: Vec::new(),
        }
    }

    pub fn mean_latency_ms(&self) -> Option<f64> {
        mean_latency_ms(&self.latency_ms)
    }

    fn require_open(&self, operation: &'static str) -> Result<(), ServiceError> {
        if self.state == SessionState::Closed {
            Err(ServiceError::InvalidState { state: self.state, operation })
        } else {
            Ok(())
        }
    }
}

fn default_auto_detect() -> bool {
    true
}

/// A frame as submitted by a client: image metadata, landmarks from the
/// on-device face model (absent when no face was found), and optionally the
/// encoded image itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRequest {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub landmarks: Option<Vec<Landmark>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_base64: Option<String>,
    #[serde(default = "default_auto_detect")]
    pub auto_detect: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResponse {
    pub state: SessionState,
    pub decision: GateDecision,
    pub crop: Option<PixelRect>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detections: Option<Vec<Detection>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
}

/// Everything the service needs at startup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub backend: BackendSelection,
    #[serde(default)]
    pub gate: GateConfig,
    #[serde(default)]
    pub anchors: AnchorConfig,
    #[serde(default)]
    pub postprocess: PostprocessParams,
    pub form_path: Option<PathBuf>,
    pub clinics_path: Option<PathBuf>,
    pub quiz_path: Option<PathBuf>,
    /// Session spool directory; `None` keeps sessions in memory only.
    pub spool_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSelection {
    Mock { fixture: PathBuf },
    DetectionsFile { path: PathBuf },
}

pub struct ScreeningService {
    gate: GateConfig,
    source: DetectionSource,
    form: QuestionnaireForm,
    clinics: ClinicRegistry,
    quiz: QuizBank,
    store: SessionStore,
}

impl ScreeningService {
    pub fn new(gate: GateConfig, source: DetectionSource, store: SessionStore) -> Result<Self, ServiceError> {
        gate.validate().map_err(|e| ServiceError::Config(e.to_string()))?;
        Ok(Self {
            gate,
            source,
            form: QuestionnaireForm::builtin(),
            clinics: ClinicRegistry::builtin(),
            quiz: QuizBank::builtin(),
            store,
        })
    }

    pub fn from_config(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let source = match &config.backend {
            BackendSelection::Mock { fixture } => {
                DetectionSource::mock(fixture, config.anchors.clone(), config.postprocess)?
            }
            BackendSelection::DetectionsFile { path } => DetectionSource::detections_file(path)?,
        };
        let store = match &config.spool_dir {
            Some(dir) => SessionStore::open(dir)?,
            None => SessionStore::in_memory(),
        };
        let read =
            |p: &PathBuf| std::fs::read_to_string(p).map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())));
        let mut service = Self::new(config.gate, source, store)?;
        if let Some(p) = &config.form_path {
            service.form = QuestionnaireForm::from_json(&read(p)?).map_err(|e| ServiceError::Config(e.to_string()))?;
        }
        if let Some(p) = &config.clinics_path {
            service.clinics = ClinicRegistry::from_path(p).map_err(|e| ServiceError::Config(e.to_string()))?;
        }
        if let Some(p) = &config.quiz_path {
            service.quiz = QuizBank::from_path(p).map_err(|e| ServiceError::Config(e.to_string()))?;
        }
        Ok(service)
    }

    pub fn with_form(mut self, form: QuestionnaireForm) -> Self {
        self.form = form;
        self
    }

    pub fn with_clinics(mut self, clinics: ClinicRegistry) -> Self {
        self.clinics = clinics;
        self
    }

    pub fn with_quiz(mut self, quiz: QuizBank) -> Self {
        self.quiz = quiz;
        self
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    pub fn source(&self) -> &DetectionSource {
        &self.source
    }

    pub fn form(&self) -> &QuestionnaireForm {
        &self.form
    }

    pub fn create_session(&self) -> Result<SessionCreated, ServiceError> {
        let session = Session::new();
        let session_id = session.session_id.clone();
        self.store.insert(session)?;
        Ok(SessionCreated { session_id })
    }

    pub fn session(&self, id: &str) -> Result<Session, ServiceError> {
        self.store.snapshot(id)
    }

    pub fn submit_frame(&self, id: &str, frame: &FrameRequest) -> Result<FrameResponse, ServiceError> {
        let image =
            PixelSize::new(frame.width, frame.height).map_err(|e| ServiceError::InvalidRequest(e.to_string()))?;
        let landmarks = frame
            .landmarks
            .as_ref()
            .map(|pts| LandmarkSet::new(pts.clone()))
            .transpose()
            .map_err(|e| ServiceError::InvalidRequest(e.to_string()))?;
        let pixels = frame
            .image_base64
            .as_deref()
            .map(|b| base64::engine::general_purpose::STANDARD.decode(b))
            .transpose()
            .map_err(|e| ServiceError::InvalidRequest(format!("image_base64: {e}")))?;

        self.store.update(id, |session| {
            session.require_open("submit a frame")?;
            if session.state >= SessionState::Detected {
                return Err(ServiceError::InvalidState { state: session.state, operation: "submit a frame" });
            }
            let decision = evaluate_gate(landmarks.as_ref(), image, &self.gate);
            session.frames.push(FrameRecord {
                image_id: frame.image_id.clone(),
                image_size: image,
                decision: decision.clone(),
            });
            if decision.verdict != GateVerdict::Pass {
                session.state = SessionState::New;
                session.crop = None;
                return Ok(Ok(FrameResponse {
                    state: session.state,
                    decision,
                    crop: None,
                    detections: None,
                    latency_ms: None,
                }));
            }
            let rect = crop_region(&decision, image).map_err(|e| ServiceError::InvalidRequest(e.to_string()))?;
            session.state = SessionState::Gated;
            session.crop = Some(CropReference { image_id: frame.image_id.clone(), image_size: image, rect });
            let mut response =
                FrameResponse { state: session.state, decision, crop: Some(rect), detections: None, latency_ms: None };
            if frame.auto_detect {
                // A detector failure must not lose the accepted frame, so it is
                // reported after the gate result has been stored.
                match self.run_detection(session, pixels.as_deref()) {
                    Ok(outcome) => {
                        response.state = session.state;
                        response.detections = Some(outcome.detections);
                        response.latency_ms = outcome.postprocess_ms;
                    }
                    Err(e) => return Ok(Err(e)),
                }
            }
            Ok(Ok(response))
        })?
    }

    /// Runs detection on the stored crop of a `Gated` session; the retry path
    /// after a transient backend failure.
    pub fn detect(&self, id: &str) -> Result<Vec<Detection>, ServiceError> {
        self.store.update(id, |session| {
            if session.state != SessionState::Gated {
                return Err(ServiceError::InvalidState { state: session.state, operation: "run detection" });
            }
            self.run_detection(session, None).map(|o| o.detections)
        })
    }

    fn run_detection(&self, session: &mut Session, pixels: Option<&[u8]>) -> Result<DetectOutcome, ServiceError> {
        let crop = session.crop.as_ref().ok_or(ServiceError::NotReady)?;
        let input = FrameInput { image_id: &crop.image_id, image_size: crop.image_size, crop: crop.rect, pixels };
        let outcome = self.source.detect(&input)?;
        if let Some(ms) = outcome.postprocess_ms {
            session.latency_ms.push(ms);
        }
        session.detections = Some(outcome.detections.clone());
        session.state = SessionState::Detected;
        Ok(outcome)
    }

    pub fn submit_questionnaire(
        &self,
        id: &str,
        response: &QuestionnaireResponse,
    ) -> Result<QuestionnaireScore, ServiceError> {
        let score = score_questionnaire(&self.form, response)?;
        self.store.update(id, |session| {
            session.require_open("submit a questionnaire")?;
            session.questionnaire = Some(response.clone());
            session.questionnaire_score = Some(score.clone());
            Ok(score)
        })
    }

    /// Fused report. Recomputed from stored inputs on every call, so repeated
    /// calls without new inputs return identical reports.
    pub fn get_report(&self, id: &str) -> Result<RiskReport, ServiceError> {
        self.store.update(id, |session| {
            session.require_open("build a report")?;
            let detections = session.detections.as_ref().ok_or(ServiceError::NotReady)?;
            let report = assess(detections, session.questionnaire_score.as_ref());
            session.report = Some(report.clone());
            session.state = SessionState::Assessed;
            Ok(report)
        })
    }

    pub fn close_session(&self, id: &str) -> Result<SessionState, ServiceError> {
        self.store.update(id, |session| {
            session.state = SessionState::Closed;
            Ok(session.state)
        })
    }

    pub fn nearby_clinics(
        &self,
        lat: f64,
        lon: f64,
        radius_km: f64,
        medicaid_only: bool,
    ) -> Result<Vec<NearbyClinic>, ServiceError> {
        Ok(nearby_clinics(lat, lon, radius_km, medicaid_only, &self.clinics)?)
    }

    pub fn quiz(&self) -> Vec<PublicQuizItem> {
        self.quiz.public_items()
    }

    pub fn score_quiz(&self, answers: &BTreeMap<String, String>) -> Result<QuizScore, ServiceError> {
        Ok(score_quiz(self.quiz.items(), answers)?)
    }
}

/// Binds `config.listen` and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let service = std::sync::Arc::new(ScreeningService::from_config(&config)?);
    log::info!("detector: {}", service.source().descriptor());
    let listener = tokio::net::TcpListener::bind(config.listen)
        .await
        .map_err(|e| ServiceError::Config(format!("cannot bind {}: {e}", config.listen)))?;
    log::info!("listening on {}", config.listen);
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServiceError::Config(e.to_string()))
}

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{FrameRequest, ScreeningService, ServiceError};
use crate::resources::ResourceError;
use crate::risk::{QuestionnaireResponse, RiskError};

type Shared = Arc<ScreeningService>;

/// Error envelope shared by every endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error_code: String,
    pub message: String,
    pub details: Value,
}

struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        Self(e)
    }
}

fn envelope(status: StatusCode, code: &str, message: String, details: Value) -> Response {
    let body = ErrorBody { error_code: code.to_string(), message, details };
    (status, Json(body)).into_response()
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        use ServiceError as E;
        let message = self.0.to_string();
        let (status, code, details) = match &self.0 {
            E::UnknownSession(id) => (StatusCode::NOT_FOUND, "UNKNOWN_SESSION", json!({ "session_id": id })),
            E::InvalidState { state, operation } => {
                (StatusCode::CONFLICT, "INVALID_STATE", json!({ "state": state, "operation": operation }))
            }
            E::NotReady => (StatusCode::CONFLICT, "NOT_READY", Value::Null),
            E::InvalidRequest(_) => (StatusCode::BAD_REQUEST, "INVALID_REQUEST", Value::Null),
            E::Risk(RiskError::IncompleteResponse { missing }) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "INCOMPLETE_RESPONSE", json!({ "missing": missing }))
            }
            E::Risk(RiskError::UnknownQuestionId(id)) => {
                (StatusCode::BAD_REQUEST, "UNKNOWN_QUESTION_ID", json!({ "question": id }))
            }
            E::Risk(RiskError::UnknownOptionId { question, option }) => {
                (StatusCode::BAD_REQUEST, "UNKNOWN_OPTION_ID", json!({ "question": question, "option": option }))
            }
            E::Resource(ResourceError::InvalidCoordinates { .. } | ResourceError::InvalidRadius(_)) => {
                (StatusCode::BAD_REQUEST, "INVALID_COORDINATES", Value::Null)
            }
            E::Resource(ResourceError::UnknownItemId(id)) => {
                (StatusCode::BAD_REQUEST, "UNKNOWN_ITEM_ID", json!({ "item": id }))
            }
            E::BackendFailure { retryable, .. } => (
                if *retryable { StatusCode::SERVICE_UNAVAILABLE } else { StatusCode::BAD_GATEWAY },
                "BACKEND_FAILURE",
                json!({
                    "retryable": retryable,
                    "hint": if *retryable {
                        "The frame was accepted. Retry detection with POST /v1/sessions/{id}/detect."
                    } else {
                        "The detector cannot process this frame. Submit a different frame in a new session."
                    }
                }),
            ),
            E::StorageUnavailable(_) => (StatusCode::SERVICE_UNAVAILABLE, "STORAGE_UNAVAILABLE", Value::Null),
            E::Risk(_) | E::Resource(_) | E::Config(_) => {
                log::error!("internal error: {message}");
                (StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", Value::Null)
            }
        };
        envelope(status, code, message, details)
    }
}

fn bad_body(rejection: impl std::fmt::Display) -> ApiError {
    ApiError(ServiceError::InvalidRequest(rejection.to_string()))
}

/// Runs a blocking service call (file I/O, detector) off the async workers.
async fn blocking<T, F>(service: Shared, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&ScreeningService) -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&service))
        .await
        .map_err(|e| ApiError(ServiceError::Config(format!("worker panicked: {e}"))))?
        .map_err(ApiError)
}

/// Routes for the screening API; see the module docs for the flow.
pub fn router(service: Arc<ScreeningService>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/frames", post(submit_frame))
        .route("/v1/sessions/{id}/detect", post(detect))
        .route("/v1/sessions/{id}/questionnaire", post(submit_questionnaire))
        .route("/v1/sessions/{id}/report", get(get_report))
        .route("/v1/sessions/{id}/close", post(close_session))
        .route("/v1/questionnaire/form", get(form))
        .route("/v1/clinics", get(clinics))
        .route("/v1/education/quiz", get(quiz))
        .route("/v1/education/quiz/score", post(score_quiz))
        .fallback(not_found)
        .with_state(service)
}

async fn not_found() -> Response {
    envelope(StatusCode::NOT_FOUND, "NOT_FOUND", "no such endpoint".into(), Value::Null)
}

async fn health(State(s): State<Shared>) -> Json<Value> {
    Json(json!({ "status": "ok", "detector": s.source().descriptor(), "sessions": s.store().len() }))
}

async fn create_session(State(s): State<Shared>) -> Result<Response, ApiError> {
    let created = blocking(s, |s| s.create_session()).await?;
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

async fn get_session(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let session = s.session(&id)?;
    Ok(Json(session).into_response())
}

async fn submit_frame(
    State(s): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<FrameRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(frame) = body.map_err(bad_body)?;
    let out = blocking(s, move |s| s.submit_frame(&id, &frame)).await?;
    Ok(Json(out).into_response())
}

async fn detect(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let dets = blocking(s, move |s| s.detect(&id)).await?;
    Ok(Json(json!({ "detections": dets })).into_response())
}

async fn submit_questionnaire(
    State(s): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<QuestionnaireResponse>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(response) = body.map_err(bad_body)?;
    let score = blocking(s, move |s| s.submit_questionnaire(&id, &response)).await?;
    Ok(Json(score).into_response())
}

async fn get_report(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let report = blocking(s, move |s| s.get_report(&id)).await?;
    Ok(Json(report).into_response())
}

async fn close_session(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let state = blocking(s, move |s| s.close_session(&id)).await?;
    Ok(Json(json!({ "state": state })).into_response())
}

async fn form(State(s): State<Shared>) -> Response {
    Json(s.form().clone()).into_response()
}

fn default_radius_km() -> f64 {
    25.0
}

#[derive(Debug, Deserialize)]
struct ClinicQuery {
    lat: f64,
    lon: f64,
    #[serde(default = "default_radius_km")]
    radius_km: f64,
    #[serde(default)]
    medicaid_only: bool,
}

async fn clinics(State(s): State<Shared>, q: Result<Query<ClinicQuery>, QueryRejection>) -> Result<Response, ApiError> {
    let Query(q) = q.map_err(bad_body)?;
    let found = s.nearby_clinics(q.lat, q.lon, q.radius_km, q.medicaid_only)?;
    Ok(Json(found).into_response())
}

async fn quiz(State(s): State<Shared>) -> Response {
    Json(s.quiz()).into_response()
}

#[derive(Debug, Deserialize)]
struct QuizAnswers {
    answers: BTreeMap<String, String>,
}

async fn score_quiz(
    State(s): State<Shared>,
    body: Result<Json<QuizAnswers>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(body) = body.map_err(bad_body)?;
    Ok(Json(s.score_quiz(&body.answers)?).into_response())
}

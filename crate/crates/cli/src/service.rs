//! HTTP inference API: `/api/health`, `/api/model`, `/api/predict`.
//!
//! The model is installed once into a `OnceLock` and then read without locks.
//! Until it is installed every endpoint answers 503.

use std::sync::{Arc, OnceLock};
use std::time::Instant;

use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ocscreen_core::checkpoint::LoadedCheckpoint;
use ocscreen_core::{classify, imaging, ClassLabel, Model, ModelConfig, ResolutionTier, TrainingMetadata};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::CorsLayer;

pub const MAX_UPLOAD_BYTES: usize = 25 * 1024 * 1024;

#[derive(Debug)]
pub struct ServedModel {
    pub model: Model,
    pub digest: String,
    pub metadata: TrainingMetadata,
}

impl From<LoadedCheckpoint> for ServedModel {
    fn from(c: LoadedCheckpoint) -> Self {
        Self {
            model: c.model,
            digest: c.digest,
            metadata: c.metadata,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AppState {
    model: Arc<OnceLock<Arc<ServedModel>>>,
    log_requests: bool,
}

impl AppState {
    /// No model yet; endpoints answer 503 until [`AppState::install`].
    pub fn pending() -> Self {
        Self::default()
    }

    pub fn ready(model: ServedModel) -> Self {
        let state = Self::pending();
        state.install(model);
        state
    }

    pub fn with_request_log(mut self, on: bool) -> Self {
        self.log_requests = on;
        self
    }

    /// Returns false if a model was already installed.
    pub fn install(&self, model: ServedModel) -> bool {
        self.model.set(Arc::new(model)).is_ok()
    }

    fn served(&self) -> Result<Arc<ServedModel>, ApiError> {
        self.model.get().cloned().ok_or(ApiError {
            status: StatusCode::SERVICE_UNAVAILABLE,
            message: "model not loaded yet".into(),
        })
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }

    fn too_large() -> Self {
        Self::bad_request(format!("upload too large: limit is {} MiB", MAX_UPLOAD_BYTES >> 20))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub label: ClassLabel,
    pub confidence: f32,
    pub distribution: [f32; 3],
    pub model_digest: String,
    /// Size of the uploaded image.
    pub input_geometry: Geometry,
    /// Size after tier degradation (equal to the input without a tier).
    pub processed_geometry: Geometry,
    /// Requested tier as `144p`, `360p`, ...
    pub tier: Option<String>,
    /// A tier was requested but the upload was already at or below it.
    pub native: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelCard {
    pub model_digest: String,
    pub classes: Vec<ClassLabel>,
    pub input_side: usize,
    pub parameter_count: usize,
    pub config: ModelConfig,
    pub training: TrainingMetadata,
}

pub fn router(state: AppState, cors: bool) -> Router {
    let app = Router::new()
        .route("/api/health", get(health))
        .route("/api/model", get(model_card))
        .route("/api/predict", post(predict))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state);
    if cors {
        app.layer(CorsLayer::permissive())
    } else {
        app
    }
}

async fn health(State(state): State<AppState>) -> Response {
    match state.served() {
        Ok(m) => Json(json!({ "status": "ok", "model_digest": m.digest })).into_response(),
        Err(_) => (StatusCode::SERVICE_UNAVAILABLE, Json(json!({ "status": "loading" }))).into_response(),
    }
}

async fn model_card(State(state): State<AppState>) -> Result<Json<ModelCard>, ApiError> {
    let m = state.served()?;
    let config = m.model.config().clone();
    Ok(Json(ModelCard {
        model_digest: m.digest.clone(),
        classes: ClassLabel::ALL.to_vec(),
        input_side: config.input_size,
        parameter_count: m.model.parameter_count(),
        config,
        training: m.metadata.clone(),
    }))
}

fn multipart_error(e: axum::extract::multipart::MultipartError) -> ApiError {
    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::too_large()
    } else {
        ApiError::bad_request(e.body_text())
    }
}

async fn predict(State(state): State<AppState>, req: Request) -> Result<Json<PredictResponse>, ApiError> {
    let started = Instant::now();
    let served = state.served()?;
    let content_type = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("");
    if !content_type.starts_with("multipart/form-data") {
        return Err(ApiError {
            status: StatusCode::UNSUPPORTED_MEDIA_TYPE,
            message: "expected multipart/form-data with an \"image\" field".into(),
        });
    }
    let declared = req
        .headers()
        .get(header::CONTENT_LENGTH)
        .and_then(|v| v.to_str().ok()?.parse::<usize>().ok());
    if declared.is_some_and(|n| n > MAX_UPLOAD_BYTES) {
        return Err(ApiError::too_large());
    }

    let mut form = Multipart::from_request(req, &())
        .await
        .map_err(|e| ApiError::bad_request(e.body_text()))?;
    let mut image = None;
    let mut tier = None;
    while let Some(field) = form.next_field().await.map_err(multipart_error)? {
        match field.name() {
            Some("image") => image = Some(field.bytes().await.map_err(multipart_error)?),
            Some("tier") => {
                let text = field.text().await.map_err(multipart_error)?;
                if !text.trim().is_empty() {
                    tier = Some(text.parse::<ResolutionTier>().map_err(ApiError::bad_request)?);
                }
            }
            _ => {}
        }
    }
    let bytes = image.ok_or_else(|| ApiError::bad_request("missing \"image\" field"))?;
    let upload_len = bytes.len();

    let worker = served.clone();
    let response = tokio::task::spawn_blocking(move || {
        let img = imaging::decode(&bytes).map_err(|e| ApiError::bad_request(format!("could not decode image: {e}")))?;
        let c = classify(&worker.model, &img, tier).map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: e.to_string(),
        })?;
        Ok::<_, ApiError>(PredictResponse {
            label: c.prediction.label,
            confidence: c.prediction.confidence,
            distribution: c.prediction.distribution,
            model_digest: worker.digest.clone(),
            input_geometry: Geometry {
                width: img.width(),
                height: img.height(),
            },
            processed_geometry: Geometry {
                width: c.width,
                height: c.height,
            },
            tier: tier.map(|t| t.to_string()),
            native: c.native,
        })
    })
    .await
    .map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        message: e.to_string(),
    })?;

    if state.log_requests {
        // metadata only; image content is never logged or stored
        let outcome = response.as_ref().map_or_else(|e| e.status.as_u16(), |_| 200);
        eprintln!(
            "predict bytes={upload_len} tier={} status={outcome} ms={}",
            tier.map_or("none".to_string(), |t| t.to_string()),
            started.elapsed().as_millis()
        );
    }
    response.map(Json)
}

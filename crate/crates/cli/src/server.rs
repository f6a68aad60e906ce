//! Local HTTP API for the ROI annotator.
//!
//! | method | path | body |
//! |---|---|---|
//! | GET | `/api/frames` | `{count, fps, indices}` |
//! | GET | `/api/frames/{i}.png` | decoded frame |
//! | GET | `/api/roi-config` | current RoiConfig (JSON) |
//! | PUT | `/api/roi-config` | RoiConfig; 409 on stale `version`, 422 with a validation report |
//! | GET | `/api/preview/{i}.png` | frame with ROI outlines |
//! | GET | `/api/enhanced/{label}/{i}.png` | enhanced binary crop of one ROI |
//!
//! A successful PUT bumps `version` and rewrites the ROI file atomically.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use hudtrace::imaging::PreprocessParams;
use hudtrace::ingest::FrameSource;
use hudtrace::roi::{crop_roi, enhance_roi, render_preview, validate_config, RoiConfig};
use hudtrace::GrayImage;
use serde::Serialize;
use serde_json::json;
use tokio::sync::Mutex;

pub struct AnnotatorState {
    pub frames: FrameSource,
    pub params: PreprocessParams,
    pub roi_path: PathBuf,
    /// Current document; created empty at the frame size when the file does not exist yet.
    pub rois: Mutex<RoiConfig>,
}

pub type Shared = Arc<AnnotatorState>;

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    BadRequest(String),
    Conflict { current_version: u64 },
    Invalid(serde_json::Value),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, json!({ "error": m })),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, json!({ "error": m })),
            ApiError::Conflict { current_version } => (
                StatusCode::CONFLICT,
                json!({ "error": "stale version", "current_version": current_version }),
            ),
            ApiError::Invalid(report) => (StatusCode::UNPROCESSABLE_ENTITY, report),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": m })),
        };
        (status, Json(body)).into_response()
    }
}

fn png(img: &GrayImage) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], img.to_png()).into_response()
}

/// `"12.png"` → 12.
fn png_index(file: &str) -> Result<usize, ApiError> {
    file.strip_suffix(".png")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ApiError::NotFound(format!("no such image {file:?}")))
}

async fn load(state: &Shared, index: usize) -> Result<GrayImage, ApiError> {
    if index >= state.frames.frame_count() {
        return Err(ApiError::NotFound(format!(
            "frame {index} out of range (0..{})",
            state.frames.frame_count()
        )));
    }
    let st = state.clone();
    tokio::task::spawn_blocking(move || st.frames.load_frame(index))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(|e| ApiError::Internal(e.to_string()))
}

#[derive(Serialize)]
struct FrameList {
    count: usize,
    fps: f64,
    indices: Vec<usize>,
}

async fn list_frames(State(state): State<Shared>) -> Json<FrameList> {
    let count = state.frames.frame_count();
    Json(FrameList {
        count,
        fps: state.frames.fps,
        indices: (0..count).collect(),
    })
}

async fn frame_png(State(state): State<Shared>, Path(file): Path<String>) -> Result<Response, ApiError> {
    let img = load(&state, png_index(&file)?).await?;
    Ok(png(&img))
}

async fn get_config(State(state): State<Shared>) -> Json<RoiConfig> {
    Json(state.rois.lock().await.clone())
}

async fn put_config(State(state): State<Shared>, body: Result<Json<RoiConfig>, axum::extract::rejection::JsonRejection>) -> Result<Json<RoiConfig>, ApiError> {
    let Json(mut incoming) = body.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let mut current = state.rois.lock().await;
    if incoming.version != current.version {
        return Err(ApiError::Conflict {
            current_version: current.version,
        });
    }
    let report = validate_config(&incoming);
    if !report.is_valid() {
        return Err(ApiError::Invalid(serde_json::to_value(&report).expect("report serialises")));
    }
    incoming.version = current.version + 1;
    incoming.save(&state.roi_path).map_err(|e| ApiError::Internal(e.to_string()))?;
    tracing::info!(version = incoming.version, path = %state.roi_path.display(), "ROI config saved");
    *current = incoming.clone();
    Ok(Json(incoming))
}

async fn preview_png(State(state): State<Shared>, Path(file): Path<String>) -> Result<Response, ApiError> {
    let img = load(&state, png_index(&file)?).await?;
    let cfg = state.rois.lock().await.clone();
    let out = render_preview(&img, &cfg).map_err(|e| ApiError::Invalid(json!({ "error": e.to_string() })))?;
    Ok(png(&out))
}

async fn enhanced_png(State(state): State<Shared>, Path((label, file)): Path<(String, String)>) -> Result<Response, ApiError> {
    let index = png_index(&file)?;
    let spec = state
        .rois
        .lock()
        .await
        .find(&label)
        .cloned()
        .ok_or_else(|| ApiError::NotFound(format!("no saved ROI labelled {label:?}")))?;
    let img = load(&state, index).await?;
    let crop = crop_roi(&img, &spec).map_err(|e| ApiError::Invalid(json!({ "error": e.to_string() })))?;
    let out = enhance_roi(&crop, &spec.kind, &state.params).map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(png(&out))
}

pub fn router(state: Shared, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/frames", get(list_frames))
        .route("/api/frames/{file}", get(frame_png))
        .route("/api/roi-config", get(get_config).put(put_config))
        .route("/api/preview/{file}", get(preview_png))
        .route("/api/enhanced/{label}/{file}", get(enhanced_png))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

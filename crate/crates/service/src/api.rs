use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use oralscreen_core::aggregation::{subject_consensus, ImageAnnotation, SubjectConsensus};
use oralscreen_core::io::ImageEntry;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::store::{AnnotationStore, StoreError};

pub const DEFAULT_PORT: u16 = 8350;

/// Images the service hands out, and the subjects they belong to.
#[derive(Debug, Clone, Default)]
pub struct ImageCatalog {
    images: BTreeMap<String, ImageEntry>,
    subjects: BTreeSet<String>,
}

impl ImageCatalog {
    pub fn new(entries: Vec<ImageEntry>) -> Self {
        let subjects = entries.iter().map(|e| e.subject_id.clone()).collect();
        let images = entries
            .into_iter()
            .map(|e| (e.image_id.clone(), e))
            .collect();
        Self { images, subjects }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&ImageEntry> {
        self.images.get(image_id)
    }

    pub fn has_subject(&self, subject_id: &str) -> bool {
        self.subjects.contains(subject_id)
    }
}

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<AnnotationStore>,
    pub catalog: Arc<ImageCatalog>,
}

impl AppState {
    pub fn new(store: AnnotationStore, catalog: ImageCatalog) -> Self {
        Self {
            store: Arc::new(store),
            catalog: Arc::new(catalog),
        }
    }
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(serde_json::json!({ "error": self.message })),
        )
            .into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Invalid(inner) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, inner.to_string()),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Deserialize)]
struct QueueQuery {
    annotator: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub image_id: String,
    pub subject_id: String,
    pub complete: bool,
}

async fn list_images(
    State(state): State<AppState>,
    Query(q): Query<QueueQuery>,
) -> ApiResult<Json<Vec<QueueEntry>>> {
    let annotator = q
        .annotator
        .filter(|a| !a.trim().is_empty())
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing `annotator` query parameter"))?;
    let done: BTreeSet<String> = state
        .store
        .snapshot()
        .into_iter()
        .filter(|a| a.annotator_id == annotator)
        .map(|a| a.image_id)
        .collect();
    Ok(Json(
        state
            .catalog
            .images
            .values()
            .map(|e| QueueEntry {
                image_id: e.image_id.clone(),
                subject_id: e.subject_id.clone(),
                complete: done.contains(&e.image_id),
            })
            .collect(),
    ))
}

async fn post_annotation(
    State(state): State<AppState>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<ImageAnnotation>)> {
    let ann: ImageAnnotation = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let entry = state.catalog.get(&ann.image_id).ok_or_else(|| {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("unknown image `{}`", ann.image_id),
        )
    })?;
    if entry.subject_id != ann.subject_id {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!(
                "image `{}` belongs to subject `{}`, not `{}`",
                ann.image_id, entry.subject_id, ann.subject_id
            ),
        ));
    }
    let store = state.store.clone();
    let stored = tokio::task::spawn_blocking(move || store.append(ann))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok((StatusCode::CREATED, Json(stored)))
}

async fn consensus(
    State(state): State<AppState>,
    Path(subject_id): Path<String>,
) -> ApiResult<Json<SubjectConsensus>> {
    if !state.catalog.has_subject(&subject_id) {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            format!("unknown subject `{subject_id}`"),
        ));
    }
    let snapshot = state.store.snapshot();
    subject_consensus(&subject_id, &snapshot)
        .map(Json)
        .map_err(|e| ApiError::new(StatusCode::NOT_FOUND, e.to_string()))
}

async fn image_file(
    State(state): State<AppState>,
    Path(image_id): Path<String>,
) -> ApiResult<Response> {
    let path: PathBuf = state
        .catalog
        .get(&image_id)
        .and_then(|e| e.file.clone())
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no file for image `{image_id}`")))?;
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|e| ApiError::new(StatusCode::NOT_FOUND, format!("{}: {e}", path.display())))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorProgress {
    pub completed: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub total_images: usize,
    pub annotators: BTreeMap<String, AnnotatorProgress>,
}

async fn progress(State(state): State<AppState>) -> Json<Progress> {
    let mut done: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for a in state.store.snapshot() {
        if state.catalog.get(&a.image_id).is_some() {
            done.entry(a.annotator_id).or_default().insert(a.image_id);
        }
    }
    let total = state.catalog.len();
    Json(Progress {
        total_images: total,
        annotators: done
            .into_iter()
            .map(|(id, images)| {
                let completed = images.len();
                let fraction = if total == 0 {
                    0.0
                } else {
                    completed as f64 / total as f64
                };
                (id, AnnotatorProgress { completed, fraction })
            })
            .collect(),
    })
}

/// CORS for the portal: any origin when `origin` is `None`.
pub fn cors_layer(origin: Option<&str>) -> Result<CorsLayer, header::InvalidHeaderValue> {
    let allow = match origin {
        Some(o) => AllowOrigin::exact(HeaderValue::from_str(o)?),
        None => AllowOrigin::any(),
    };
    Ok(CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]))
}

pub fn router(state: AppState, cors: CorsLayer) -> Router {
    Router::new()
        .route("/api/images", get(list_images))
        .route("/api/images/{id}/file", get(image_file))
        .route("/api/annotations", post(post_annotation))
        .route("/api/consensus/{subject_id}", get(consensus))
        .route("/api/progress", get(progress))
        .layer(cors)
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, state: AppState, cors: CorsLayer) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state, cors)).await
}

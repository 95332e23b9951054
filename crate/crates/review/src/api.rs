//! HTTP+JSON routes over a [`ReviewStore`].

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use elseg_core::annotate::{to_coco, Category, Status};
use elseg_core::config::CostSettings;
use elseg_core::evaluate::CostSummary;
use elseg_core::geometry::Polygon;
use serde::{Deserialize, Serialize};

use crate::error::ReviewError;
use crate::store::{Decision, ReviewStore, StoreStats};

/// Inputs for the cost figure reported by `/api/stats`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostOptions {
    /// Mean inference seconds per image; without it no cost is reported.
    pub t_inference: Option<f64>,
    /// Used until the store has measured revision times.
    pub t_revision: f64,
    pub t_tuning: f64,
}

impl Default for CostOptions {
    fn default() -> Self {
        Self {
            t_inference: None,
            t_revision: 0.0,
            t_tuning: 0.0,
        }
    }
}

#[derive(Clone)]
struct AppState {
    store: Arc<ReviewStore>,
    cost: CostOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSummary {
    pub id: String,
    pub status: Status,
    pub version: u64,
    pub polygons: usize,
    pub thumbnail_url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

/// Vertices either as a bare ring `[[x, y], ...]` or as `{"vertices": ...}`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PolygonInput {
    Ring(Vec<(f64, f64)>),
    Object { vertices: Vec<(f64, f64)> },
}

/// Body of `PUT /api/annotations/{id}`. Extra fields are ignored so a client
/// may send back the whole edited record.
#[derive(Debug, Clone, Deserialize)]
pub struct DecisionRequest {
    pub expected_version: u64,
    pub status: Status,
    #[serde(default)]
    pub polygons: Option<Vec<PolygonInput>>,
    #[serde(default, alias = "reviewer_note")]
    pub note: Option<String>,
}

impl DecisionRequest {
    fn into_decision(self) -> Result<Decision, ReviewError> {
        let polygons = self
            .polygons
            .map(|ps| {
                ps.into_iter()
                    .enumerate()
                    .map(|(i, p)| {
                        let v = match p {
                            PolygonInput::Ring(v) | PolygonInput::Object { vertices: v } => v,
                        };
                        Polygon::new(v).map_err(|e| ReviewError::Invalid(format!("polygon {i}: {e}")))
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .transpose()?;
        Ok(Decision {
            expected_version: self.expected_version,
            status: self.status,
            polygons,
            note: self.note,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsResponse {
    #[serde(flatten)]
    pub counts: StoreStats,
    #[serde(default)]
    pub cost: Option<CostSummary>,
}

impl IntoResponse for ReviewError {
    fn into_response(self) -> Response {
        let status = match self.code() {
            "not_found" => StatusCode::NOT_FOUND,
            "conflict" => StatusCode::CONFLICT,
            "invalid" => StatusCode::UNPROCESSABLE_ENTITY,
            "bad_request" => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{self}");
        }
        let body = ErrorBody {
            code: self.code().to_owned(),
            message: self.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ReviewError>;

/// Runs blocking store work off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(ReviewError::Internal(format!("request handler failed: {e}"))))
}

async fn list_images(State(s): State<AppState>) -> Json<Vec<ImageSummary>> {
    let list = s
        .store
        .records()
        .into_iter()
        .map(|r| ImageSummary {
            thumbnail_url: format!("/api/images/{}", r.image_id),
            id: r.image_id,
            status: r.status,
            version: r.version,
            polygons: r.polygons.len(),
        })
        .collect();
    Json(list)
}

async fn image(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let bytes = blocking(move || {
        let path = s.store.image_path(&id)?;
        std::fs::read(&path).map_err(|e| ReviewError::Io { path, source: e })
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

async fn annotation(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let record = s.store.fetch(&id)?;
    Ok(Json(&*record).into_response())
}

async fn decide(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let req: DecisionRequest =
        serde_json::from_slice(&body).map_err(|e| ReviewError::BadRequest(format!("malformed decision: {e}")))?;
    let decision = req.into_decision()?;
    let record = blocking(move || s.store.record_decision(&id, decision)).await?;
    Ok(Json(record).into_response())
}

async fn export_coco(State(s): State<AppState>) -> ApiResult<Response> {
    let gold: Vec<_> = s.store.records().into_iter().filter(|r| r.status == Status::Gold).collect();
    let doc = to_coco(&gold, &[Category::defect()])?;
    Ok(([(header::CONTENT_TYPE, "application/json")], doc).into_response())
}

async fn stats(State(s): State<AppState>) -> ApiResult<Json<StatsResponse>> {
    let counts = s.store.stats();
    let cost = match s.cost.t_inference {
        Some(t) if counts.total > 0 => {
            let settings = CostSettings {
                t_revision: counts.mean_revision_seconds.unwrap_or(s.cost.t_revision),
                t_tuning: s.cost.t_tuning,
            };
            Some(CostSummary::new(t, &settings, counts.total as u64)?)
        }
        _ => None,
    };
    Ok(Json(StatsResponse { counts, cost }))
}

async fn not_found() -> ReviewError {
    ReviewError::NotFound("route".into())
}

pub fn router(store: Arc<ReviewStore>, cost: CostOptions) -> Router {
    Router::new()
        .route("/api/images", get(list_images))
        .route("/api/images/{id}", get(image))
        .route("/api/annotations/{id}", get(annotation).put(decide))
        .route("/api/export/coco", get(export_coco))
        .route("/api/stats", get(stats))
        .fallback(not_found)
        .with_state(AppState { store, cost })
}

//! HTTP routes under /v1.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use kuramoto_oed::kuramoto::Pair;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::store::{ApiError, CreateRequest, Recommendation, Store};

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

/// Routes for `store`; when `static_dir` is given, other paths are served
/// from it.
pub fn router(store: Arc<Store>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/health", get(|| async { Json(json!({ "ok": true })) }))
        .route("/campaigns", post(create).get(list))
        .route("/campaigns/{id}/recommendation", get(recommendation))
        .route("/campaigns/{id}/outcomes", post(outcome))
        .route("/campaigns/{id}/state", get(state))
        .with_state(store);
    let app = Router::new().nest("/v1", api);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

fn parse<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("malformed body: {e}")))
}

async fn create(State(store): State<Arc<Store>>, body: Bytes) -> ApiResult {
    let request: CreateRequest = parse(&body)?;
    let record = store.create(request)?;
    Ok((
        StatusCode::CREATED,
        [(
            header::LOCATION,
            format!("/v1/campaigns/{}/state", record.id),
        )],
        Json(json!({ "id": record.id, "status": record.status, "pending": record.pending })),
    )
        .into_response())
}

#[derive(Serialize)]
struct Summary<'a> {
    id: &'a str,
    name: &'a str,
    strategy: String,
    status: crate::record::Status,
    steps: usize,
    updated_ms: u64,
}

async fn list(State(store): State<Arc<Store>>) -> Json<serde_json::Value> {
    let all = store.list();
    let rows: Vec<Summary> = all
        .iter()
        .map(|r| Summary {
            id: &r.id,
            name: &r.config.name,
            strategy: r.config.strategy.to_string(),
            status: r.status,
            steps: r.history.len(),
            updated_ms: r.updated_ms,
        })
        .collect();
    Json(json!({ "campaigns": rows }))
}

async fn recommendation(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult {
    Ok(match store.recommendation(&id)? {
        r @ Recommendation::Ready { .. } => Json(r).into_response(),
        r @ Recommendation::Computing { .. } => (StatusCode::ACCEPTED, Json(r)).into_response(),
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OutcomeRequest {
    pair: [usize; 2],
    synchronized: bool,
}

async fn outcome(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult {
    store.get(&id)?;
    let request: OutcomeRequest = parse(&body)?;
    let pair = Pair::one_based(request.pair[0], request.pair[1])
        .map_err(|e| ApiError::Unprocessable(e.to_string()))?;
    // the writer lock is a blocking mutex; keep it off the async workers
    let reply =
        tokio::task::spawn_blocking(move || store.post_outcome(&id, pair, request.synchronized))
            .await
            .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(Json(reply).into_response())
}

async fn state(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult {
    let record = store.get(&id)?.snapshot();
    let etag = format!(
        "\"{}-{}-{}\"",
        record.id,
        record.version,
        record.job_error.is_some() as u8
    );
    let tag = HeaderValue::from_str(&etag).map_err(|e| ApiError::Internal(e.to_string()))?;
    if headers.get(header::IF_NONE_MATCH).is_some_and(|v| v == tag) {
        return Ok((StatusCode::NOT_MODIFIED, [(header::ETAG, tag)]).into_response());
    }
    Ok(([(header::ETAG, tag)], Json(record.as_ref())).into_response())
}

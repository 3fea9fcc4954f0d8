//! Curation service: the dataset manifest over HTTP/JSON.
//!
//! All handlers run the (blocking) dataset work on the blocking pool. Reads
//! share a lock; every mutation takes the write lock, persists the manifest and
//! only then answers, so an acknowledged selection survives a crash.

use std::future::Future;
use std::net::SocketAddr;
use std::path::{Path as FsPath, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use snowgt_core::api::{
    self, ErrorBody, ExportAck, MutationAck, RejectionRequest, SelectionRequest, VideoDetail,
    VideoSummary,
};
use snowgt_core::dataset::{timestamp_now, Dataset, FrameKind};
use snowgt_core::metrics::LossWeights;
use snowgt_core::synth::DEFAULT_TAU;
use snowgt_core::Image;
use tower_http::services::ServeDir;

pub const DEFAULT_BIND: &str = "127.0.0.1:8641";

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("server failed: {0}")]
    Serve(#[source] std::io::Error),
}

/// Shared state: one dataset, one writer at a time.
#[derive(Clone)]
pub struct AppState {
    dataset: Arc<RwLock<Dataset>>,
    export_dir: PathBuf,
    weights: LossWeights,
}

impl AppState {
    pub fn new(dataset: Dataset) -> Self {
        let export_dir = dataset.default_export_dir();
        Self {
            dataset: Arc::new(RwLock::new(dataset)),
            export_dir,
            weights: LossWeights::default(),
        }
    }

    pub fn with_export_dir(mut self, dir: PathBuf) -> Self {
        self.export_dir = dir;
        self
    }

    pub fn with_weights(mut self, weights: LossWeights) -> Self {
        self.weights = weights;
        self
    }

    async fn read<T: Send + 'static>(
        &self,
        f: impl FnOnce(&Dataset) -> Result<T, ApiError> + Send + 'static,
    ) -> Result<T, ApiError> {
        let dataset = Arc::clone(&self.dataset);
        tokio::task::spawn_blocking(move || {
            let guard = dataset.read().map_err(|_| ApiError::poisoned())?;
            f(&guard)
        })
        .await
        .map_err(ApiError::join)?
    }

    async fn write<T: Send + 'static>(
        &self,
        f: impl FnOnce(&mut Dataset) -> Result<T, ApiError> + Send + 'static,
    ) -> Result<T, ApiError> {
        let dataset = Arc::clone(&self.dataset);
        tokio::task::spawn_blocking(move || {
            let mut guard = dataset.write().map_err(|_| ApiError::poisoned())?;
            f(&mut guard)
        })
        .await
        .map_err(ApiError::join)?
    }
}

/// JSON error response `{error, code}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, error: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: error.into(),
                code: code.to_string(),
            },
        }
    }

    fn bad_request(error: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", error)
    }

    fn poisoned() -> Self {
        Self::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            "dataset lock poisoned",
        )
    }

    fn join(e: tokio::task::JoinError) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl From<snowgt_core::Error> for ApiError {
    fn from(e: snowgt_core::Error) -> Self {
        use snowgt_core::Error as E;
        let status = match &e {
            E::NotFound(_) | E::Bounds(_) => StatusCode::NOT_FOUND,
            E::Conflict(_) | E::InvalidTransition(_) | E::NothingSelected => StatusCode::CONFLICT,
            E::Parameter(_) | E::DimensionMismatch(_) | E::InsufficientFrames { .. } => {
                StatusCode::BAD_REQUEST
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            tracing::error!(error = %e, "request failed");
        }
        Self::new(status, e.code(), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::bad_request(r.body_text())
    }
}

impl From<PathRejection> for ApiError {
    fn from(r: PathRejection) -> Self {
        Self::bad_request(r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        Self::bad_request(r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn png(img: &Image) -> ApiResult<Response> {
    let bytes = img.to_png_bytes()?;
    Ok((
        [
            (header::CONTENT_TYPE, "image/png"),
            (header::CACHE_CONTROL, "no-store"),
        ],
        bytes,
    )
        .into_response())
}

async fn list_videos(State(state): State<AppState>) -> ApiResult<Json<Vec<VideoSummary>>> {
    state
        .read(|ds| Ok(Json(api::summaries(ds.manifest()))))
        .await
}

async fn video_detail(
    State(state): State<AppState>,
    path: Result<Path<String>, PathRejection>,
) -> ApiResult<Json<VideoDetail>> {
    let Path(id) = path?;
    state
        .read(move |ds| {
            api::detail(ds.manifest(), &id)
                .map(Json)
                .ok_or_else(|| snowgt_core::Error::NotFound(format!("video {id:?}")).into())
        })
        .await
}

#[derive(Debug, Deserialize)]
struct FrameQuery {
    #[serde(default = "snowy")]
    kind: FrameKind,
    params: Option<String>,
}

fn snowy() -> FrameKind {
    FrameKind::Snowy
}

async fn frame(
    State(state): State<AppState>,
    path: Result<Path<(String, usize)>, PathRejection>,
    query: Result<Query<FrameQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Path((id, n)) = path?;
    let Query(q) = query?;
    let img = state
        .read(move |ds| Ok(ds.frame_image(&id, n, q.kind, q.params.as_deref())?))
        .await?;
    png(&img)
}

#[derive(Debug, Deserialize)]
struct ResidualQuery {
    tau: Option<f64>,
    params: Option<String>,
}

async fn residual(
    State(state): State<AppState>,
    path: Result<Path<(String, usize)>, PathRejection>,
    query: Result<Query<ResidualQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Path((id, n)) = path?;
    let Query(q) = query?;
    let tau = q.tau.unwrap_or(DEFAULT_TAU);
    if !(tau.is_finite() && (0.0..=1.0).contains(&tau)) {
        return Err(ApiError::bad_request(format!("tau {tau} outside [0, 1]")));
    }
    let img = state
        .read(move |ds| Ok(ds.residual_overlay(&id, n, tau, q.params.as_deref())?))
        .await?;
    png(&img)
}

async fn select(
    State(state): State<AppState>,
    path: Result<Path<String>, PathRejection>,
    body: Result<Json<SelectionRequest>, JsonRejection>,
) -> ApiResult<Json<MutationAck>> {
    let Path(id) = path?;
    let Json(req) = body?;
    let revision = state
        .write(move |ds| {
            Ok(ds.record_selection(
                &id,
                req.frame,
                req.params.as_deref(),
                &req.note,
                &timestamp_now(),
            )?)
        })
        .await?;
    Ok(Json(MutationAck {
        ok: true,
        manifest_revision: revision,
    }))
}

async fn reject(
    State(state): State<AppState>,
    path: Result<Path<String>, PathRejection>,
    body: Result<Json<RejectionRequest>, JsonRejection>,
) -> ApiResult<Json<MutationAck>> {
    let Path(id) = path?;
    let Json(req) = body?;
    let revision = state
        .write(move |ds| Ok(ds.reject(&id, &req.note, &timestamp_now())?))
        .await?;
    Ok(Json(MutationAck {
        ok: true,
        manifest_revision: revision,
    }))
}

// The body must be a JSON object (`{}`), or empty. The output directory is
// fixed at startup; clients cannot choose where files are written.
async fn export(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<ExportAck>> {
    if !body.iter().all(u8::is_ascii_whitespace) {
        let value: serde_json::Value = serde_json::from_slice(&body)
            .map_err(|e| ApiError::bad_request(format!("invalid JSON: {e}")))?;
        if !value.is_object() {
            return Err(ApiError::bad_request("export body must be a JSON object"));
        }
    }
    let (dir, weights) = (state.export_dir.clone(), state.weights);
    let report = state
        .write(move |ds| Ok(ds.export_pairs(&dir, &weights)?))
        .await?;
    Ok(Json(ExportAck {
        pairs: report.pairs,
        report_path: report.report_path,
    }))
}

async fn api_not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

/// The API router; with `ui_dir`, static files are served for every other path.
pub fn router(state: AppState, ui_dir: Option<&FsPath>) -> Router {
    let api = Router::new()
        .route("/videos", get(list_videos))
        .route("/videos/{id}", get(video_detail))
        .route("/videos/{id}/frames/{n}", get(frame))
        .route("/videos/{id}/residual/{n}", get(residual))
        .route("/videos/{id}/selection", post(select))
        .route("/videos/{id}/rejection", post(reject))
        .route("/export", post(export))
        .fallback(api_not_found)
        .with_state(state);
    let app = Router::new().nest("/api", api);
    match ui_dir {
        Some(dir) => {
            app.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true))
        }
        None => app,
    }
}

pub async fn bind(addr: &str) -> Result<tokio::net::TcpListener, ServerError> {
    tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServerError::Bind {
            addr: addr.to_string(),
            source,
        })
}

/// Serves `app` on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServerError> {
    let addr: Option<SocketAddr> = listener.local_addr().ok();
    tracing::info!(?addr, "curation service listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(ServerError::Serve)
}

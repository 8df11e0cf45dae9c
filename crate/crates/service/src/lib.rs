//! HTTP service for the curation workflow: submit an assay description, get
//! it semantified by the active model, delete statements judged invalid,
//! and export the curated records as a training-ready JSONL corpus.
//!
//! Routes (all under `/api/v1`):
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/health` | `{"status":"ok","model_loaded":bool}` |
//! | POST | `/assays` | `{text, threshold?}` -> 201 record |
//! | GET | `/assays` | all records |
//! | GET | `/assays/{uid}` | record; `?include_deleted=true` adds deleted rows |
//! | DELETE | `/assays/{uid}/statements/{sid}` | `{remaining}`; idempotent |
//! | POST | `/models/train` | `{corpus_path, method, config}` -> 202 `{job_id}` |
//! | GET | `/models/jobs/{job_id}` | job status |
//! | POST | `/models/activate` | `{artifact_path}` |
//! | GET | `/models/active` | active model summary |
//! | GET | `/export` | curated records as JSONL |

pub mod error;
pub mod jobs;
pub mod store;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use semantify_core::artifact::{ModelArtifact, Provenance};
use semantify_core::evaluation::FittedMethod;
use semantify_core::SemantifyError;

pub use error::ApiError;
use jobs::{JobTable, TrainOptions};
use store::{statement_id, CurationRecord, CurationStore, PredictedStatement, StatementSource, StoreError};

/// The model currently answering predictions. Replaced wholesale on
/// activation, so a request sees either the old or the new model.
pub struct ActiveModel {
    pub method: FittedMethod,
    pub provenance: Provenance,
    pub artifact_path: Option<PathBuf>,
}

impl ActiveModel {
    pub fn from_artifact(artifact: ModelArtifact, path: Option<PathBuf>) -> Result<Self, SemantifyError> {
        let provenance = artifact.provenance.clone();
        Ok(ActiveModel {
            method: artifact.into_fitted()?,
            provenance,
            artifact_path: path,
        })
    }

    fn method_name(&self) -> &'static str {
        match self.method {
            FittedMethod::Cluster(_) => "cluster",
            FittedMethod::Labeler(_) => "labeler",
        }
    }

    /// Runs the model; `threshold` overrides the method default.
    pub fn predict(&self, text: &str, threshold: Option<f64>) -> Result<Vec<PredictedStatement>, ApiError> {
        let entry = |s: semantify_core::Statement, source, count, score| PredictedStatement {
            statement_id: statement_id(&s),
            predicate: s.predicate,
            value: s.value,
            ontologized: s.ontologized,
            source,
            count,
            score,
        };
        match &self.method {
            FittedMethod::Cluster(m) => {
                let t = match threshold {
                    None => m.default_threshold(),
                    Some(t) if t >= 1.0 && t.fract() == 0.0 => t as usize,
                    Some(t) => {
                        return Err(ApiError::unprocessable(format!(
                            "cluster threshold must be a positive integer, got {t}"
                        )))
                    }
                };
                let p = m.predict_detailed(text, t).map_err(|e| ApiError::unprocessable(e.to_string()))?;
                Ok(p.statements
                    .into_iter()
                    .map(|(s, count)| entry(s, StatementSource::Cluster { cluster_id: p.cluster }, Some(count), None))
                    .collect())
            }
            FittedMethod::Labeler(m) => {
                let t = threshold.unwrap_or(m.config().threshold);
                if !(t > 0.0 && t < 1.0) {
                    return Err(ApiError::unprocessable(format!("labeler threshold must lie in (0, 1), got {t}")));
                }
                Ok(m.predict_with_threshold(text, t)
                    .statements
                    .into_iter()
                    .map(|(s, p)| entry(s, StatementSource::Labeler, None, Some(p)))
                    .collect())
            }
        }
    }
}

pub struct AppState {
    pub store: CurationStore,
    pub jobs: Arc<JobTable>,
    pub data_dir: PathBuf,
    model: RwLock<Option<Arc<ActiveModel>>>,
}

impl AppState {
    pub fn open(data_dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let data_dir = data_dir.as_ref().to_path_buf();
        Ok(AppState {
            store: CurationStore::open(&data_dir)?,
            jobs: Arc::new(JobTable::default()),
            data_dir,
            model: RwLock::new(None),
        })
    }

    pub fn active_model(&self) -> Option<Arc<ActiveModel>> {
        self.model.read().expect("model lock poisoned").clone()
    }

    pub fn activate(&self, model: ActiveModel) {
        *self.model.write().expect("model lock poisoned") = Some(Arc::new(model));
    }

    pub fn load_model(&self, path: &Path) -> Result<(), SemantifyError> {
        let artifact = ModelArtifact::load(path)?;
        self.activate(ActiveModel::from_artifact(artifact, Some(path.to_path_buf()))?);
        Ok(())
    }
}

pub fn app(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/v1/health", get(health))
        .route("/api/v1/assays", post(create_assay).get(list_assays))
        .route("/api/v1/assays/{uid}", get(get_assay))
        .route("/api/v1/assays/{uid}/statements/{sid}", delete(delete_statement))
        .route("/api/v1/models/train", post(train_model))
        .route("/api/v1/models/jobs/{job_id}", get(job_status))
        .route("/api/v1/models/activate", post(activate_model))
        .route("/api/v1/models/active", get(active_model))
        .route("/api/v1/export", get(export))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StatementView {
    #[serde(flatten)]
    pub statement: PredictedStatement,
    pub deleted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AssayView {
    pub assay_uid: String,
    pub text: String,
    pub statements: Vec<StatementView>,
    pub remaining: usize,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl AssayView {
    fn of(record: &CurationRecord, include_deleted: bool) -> Self {
        let statements = record
            .predicted
            .iter()
            .map(|p| StatementView {
                statement: p.clone(),
                deleted: record.deleted_ids.contains(&p.statement_id),
            })
            .filter(|v| include_deleted || !v.deleted)
            .collect();
        AssayView {
            assay_uid: record.assay_uid.clone(),
            text: record.text.clone(),
            statements,
            remaining: record.remaining(),
            created_at: record.created_at,
            updated_at: record.updated_at,
        }
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({"status": "ok", "model_loaded": state.active_model().is_some()}))
}

#[derive(Deserialize)]
struct SubmitRequest {
    text: String,
    threshold: Option<f64>,
}

async fn create_assay(
    State(state): State<Arc<AppState>>,
    Json(req): Json<SubmitRequest>,
) -> Result<(StatusCode, Json<AssayView>), ApiError> {
    if req.text.trim().is_empty() {
        return Err(ApiError::unprocessable("text must not be empty"));
    }
    let model = state
        .active_model()
        .ok_or_else(|| ApiError::conflict("no_model", "no model is loaded; activate one first"))?;
    let predicted = model.predict(&req.text, req.threshold)?;
    let record = state.store.create(req.text, predicted)?;
    Ok((StatusCode::CREATED, Json(AssayView::of(&record, false))))
}

async fn list_assays(State(state): State<Arc<AppState>>) -> Json<Vec<AssayView>> {
    Json(state.store.snapshot().iter().map(|r| AssayView::of(r, false)).collect())
}

#[derive(Deserialize)]
struct GetQuery {
    #[serde(default)]
    include_deleted: bool,
}

async fn get_assay(
    State(state): State<Arc<AppState>>,
    UrlPath(uid): UrlPath<String>,
    Query(q): Query<GetQuery>,
) -> Result<Json<AssayView>, ApiError> {
    let record = state
        .store
        .get(&uid)
        .ok_or_else(|| ApiError::not_found(format!("unknown assay {uid}")))?;
    Ok(Json(AssayView::of(&record, q.include_deleted)))
}

async fn delete_statement(
    State(state): State<Arc<AppState>>,
    UrlPath((uid, sid)): UrlPath<(String, String)>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let outcome = state.store.delete_statement(&uid, &sid)?;
    Ok(Json(json!({"remaining": outcome.remaining()})))
}

#[derive(Deserialize)]
struct TrainRequest {
    corpus_path: PathBuf,
    method: String,
    #[serde(default)]
    config: TrainOptions,
}

async fn train_model(
    State(state): State<Arc<AppState>>,
    Json(req): Json<TrainRequest>,
) -> Result<(StatusCode, Json<serde_json::Value>), ApiError> {
    let config = req.config.into_config(&req.method).map_err(ApiError::unprocessable)?;
    if !req.corpus_path.is_file() {
        return Err(ApiError::unprocessable(format!(
            "corpus {} is not a readable file",
            req.corpus_path.display()
        )));
    }
    let job = state
        .jobs
        .try_start(&req.method, &req.corpus_path, &state.data_dir.join("models"))
        .ok_or_else(|| ApiError::conflict("job_running", "a training job is already running"))?;
    let job_id = job.job_id.clone();
    jobs::spawn_training(state.jobs.clone(), job, config);
    Ok((StatusCode::ACCEPTED, Json(json!({"job_id": job_id}))))
}

async fn job_status(
    State(state): State<Arc<AppState>>,
    UrlPath(job_id): UrlPath<String>,
) -> Result<Json<jobs::JobStatus>, ApiError> {
    state
        .jobs
        .get(&job_id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("unknown job {job_id}")))
}

#[derive(Deserialize)]
struct ActivateRequest {
    artifact_path: PathBuf,
}

fn model_summary(model: &ActiveModel) -> serde_json::Value {
    json!({
        "method": model.method_name(),
        "artifact_path": model.artifact_path,
        "provenance": model.provenance,
    })
}

async fn activate_model(
    State(state): State<Arc<AppState>>,
    Json(req): Json<ActivateRequest>,
) -> Result<Json<serde_json::Value>, ApiError> {
    if !req.artifact_path.is_file() {
        return Err(ApiError::not_found(format!("artifact {} not found", req.artifact_path.display())));
    }
    let path = req.artifact_path.clone();
    let model = tokio::task::spawn_blocking(move || {
        let artifact = ModelArtifact::load(&path)?;
        ActiveModel::from_artifact(artifact, Some(path))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
    .map_err(|e| ApiError::unprocessable(e.to_string()))?;
    let summary = model_summary(&model);
    state.activate(model);
    Ok(Json(summary))
}

async fn active_model(State(state): State<Arc<AppState>>) -> Result<Json<serde_json::Value>, ApiError> {
    let model = state
        .active_model()
        .ok_or_else(|| ApiError::conflict("no_model", "no model is loaded"))?;
    Ok(Json(model_summary(&model)))
}

async fn export(State(state): State<Arc<AppState>>) -> Result<impl IntoResponse, ApiError> {
    let mut body = Vec::new();
    for record in state.store.snapshot() {
        serde_json::to_writer(&mut body, &record.to_bioassay()).map_err(|e| ApiError::internal(e.to_string()))?;
        body.push(b'\n');
    }
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body))
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub bind: SocketAddr,
    pub data_dir: PathBuf,
    pub model: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("loading model: {0}")]
    Model(#[from] SemantifyError),
    #[error("server i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Binds and serves until Ctrl-C. Every store write is already synced, so
/// shutdown has nothing left to flush.
pub async fn run(config: ServeConfig) -> Result<(), ServeError> {
    let state = Arc::new(AppState::open(&config.data_dir)?);
    if let Some(path) = &config.model {
        state.load_model(path)?;
    }
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app(state, config.static_dir.as_deref()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

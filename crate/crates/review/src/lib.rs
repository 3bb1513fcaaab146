//! Small HTTP service over a finished pipeline run and its decision log.
//!
//! The service never edits panels. Curators append decisions, then ask for
//! a rerun; everything else is read-only and derived from the run's
//! artifacts plus the current decision log.

mod api;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use countcurate::detect::{AnomalyKind, AnomalyRecord, AnomalyStatus};
use countcurate::pipeline::artifacts::ArtifactError;
use countcurate::pipeline::{read_decisions, run_pipeline, DecisionLog, PipelineConfig, RunArtifacts, Verdict};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

pub const RUN_ID_HEADER: &str = "x-run-id";
/// Hard cap on `limit` for list endpoints.
pub const MAX_PAGE: usize = 500;
pub const DEFAULT_PAGE: usize = 100;

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("no finished run in {0}; run the pipeline first")]
    NoRun(PathBuf),
    #[error(transparent)]
    Artifacts(#[from] ArtifactError),
    #[error(transparent)]
    Pipeline(#[from] countcurate::pipeline::PipelineError),
    #[error("cannot read decision log: {0}")]
    Decisions(#[from] countcurate::pipeline::decisions::DecisionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct RerunJob {
    pub job: u64,
    pub state: JobState,
    /// Run id the job started from.
    pub previous_run_id: String,
    /// Set once the job has finished successfully.
    pub new_run_id: Option<String>,
    pub failed_stages: Vec<String>,
    pub error: Option<String>,
}

#[derive(Default)]
struct Jobs {
    next: u64,
    all: BTreeMap<u64, RerunJob>,
}

struct Inner {
    cfg: PipelineConfig,
    token: Option<String>,
    run: RwLock<Arc<RunArtifacts>>,
    /// Serializes decision appends and reruns.
    writer: Arc<tokio::sync::Mutex<()>>,
    busy: AtomicBool,
    jobs: Mutex<Jobs>,
}

/// Shared handle given to every request.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Serves the run already written to the config's output directory.
    pub fn open(cfg: PipelineConfig, token: Option<String>) -> Result<Self, ReviewError> {
        let report = cfg.output_dir.join(countcurate::pipeline::RUN_REPORT);
        if !report.exists() {
            return Err(ReviewError::NoRun(cfg.output_dir.clone()));
        }
        let run = RunArtifacts::load(&cfg.output_dir)?;
        Ok(AppState(Arc::new(Inner {
            cfg,
            token: token.filter(|t| !t.is_empty()),
            run: RwLock::new(Arc::new(run)),
            writer: Arc::new(tokio::sync::Mutex::new(())),
            busy: AtomicBool::new(false),
            jobs: Mutex::new(Jobs::default()),
        })))
    }

    /// Like [`AppState::open`], running the pipeline first when the output
    /// directory holds no run yet.
    pub fn open_or_run(cfg: PipelineConfig, token: Option<String>) -> Result<Self, ReviewError> {
        if !cfg.output_dir.join(countcurate::pipeline::RUN_REPORT).exists() {
            run_pipeline(&cfg)?;
        }
        Self::open(cfg, token)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.0.cfg
    }

    /// The run currently being served.
    pub fn current(&self) -> Arc<RunArtifacts> {
        self.0.run.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn run_id(&self) -> String {
        self.current().run_id().to_string()
    }

    pub fn decisions(&self) -> Result<DecisionLog, ReviewError> {
        Ok(read_decisions(&self.0.cfg.decision_log)?)
    }

    pub fn job(&self, id: u64) -> Option<RerunJob> {
        self.0.jobs.lock().unwrap_or_else(|e| e.into_inner()).all.get(&id).cloned()
    }

    pub fn is_busy(&self) -> bool {
        self.0.busy.load(Ordering::SeqCst)
    }

    /// Starts a rerun in the background. `None` if one is already running.
    pub fn start_rerun(&self) -> Option<RerunJob> {
        if self.0.busy.swap(true, Ordering::SeqCst) {
            return None;
        }
        let job = {
            let mut jobs = self.0.jobs.lock().unwrap_or_else(|e| e.into_inner());
            jobs.next += 1;
            let job = RerunJob {
                job: jobs.next,
                state: JobState::Running,
                previous_run_id: self.run_id(),
                new_run_id: None,
                failed_stages: Vec::new(),
                error: None,
            };
            jobs.all.insert(job.job, job.clone());
            job
        };
        let state = self.clone();
        let id = job.job;
        tokio::spawn(async move {
            let _guard = state.0.writer.clone().lock_owned().await;
            let cfg = state.0.cfg.clone();
            let outcome = tokio::task::spawn_blocking(move || -> Result<_, ReviewError> {
                let report = run_pipeline(&cfg)?;
                let run = RunArtifacts::load(&cfg.output_dir)?;
                Ok((report, run))
            })
            .await;
            let mut jobs = state.0.jobs.lock().unwrap_or_else(|e| e.into_inner());
            let entry = jobs.all.get_mut(&id).expect("job registered before spawn");
            match outcome {
                Ok(Ok((report, run))) => {
                    entry.state = JobState::Succeeded;
                    entry.new_run_id = Some(report.run_id.clone());
                    entry.failed_stages = report
                        .stages
                        .iter()
                        .filter(|s| s.status == countcurate::pipeline::StageStatus::Failed)
                        .map(|s| s.stage.clone())
                        .collect();
                    *state.0.run.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(run);
                    log::info!("rerun {id} finished as {}", report.run_id);
                }
                Ok(Err(e)) => {
                    entry.state = JobState::Failed;
                    entry.error = Some(e.to_string());
                    log::warn!("rerun {id} failed: {e}");
                }
                Err(e) => {
                    entry.state = JobState::Failed;
                    entry.error = Some(format!("rerun task aborted: {e}"));
                }
            }
            drop(jobs);
            state.0.busy.store(false, Ordering::SeqCst);
        });
        Some(job)
    }
}

/// Status of a record once the decision log is taken into account.
/// Repaired is final; otherwise the effective decision wins.
pub fn current_status(record: &AnomalyRecord, log: &DecisionLog) -> AnomalyStatus {
    if record.status == AnomalyStatus::Repaired || record.kind == AnomalyKind::OdViolation {
        return record.status;
    }
    match log.effective.get(&record.id).map(|d| d.verdict) {
        Some(Verdict::Confirm) => AnomalyStatus::Confirmed,
        Some(Verdict::Dismiss) => AnomalyStatus::Dismissed,
        None => record.status,
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub run_id: String,
}

impl ApiError {
    pub fn new(run_id: &str, status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
            run_id: run_id.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "run_id": self.run_id, "error": self.message });
        (self.status, Json(body)).into_response()
    }
}

async fn guard(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let run_id = state.run_id();
    if let Some(token) = &state.0.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|given| given == token);
        if !ok {
            let mut resp = ApiError::new(&run_id, StatusCode::UNAUTHORIZED, "missing or wrong bearer token").into_response();
            resp.headers_mut()
                .insert(header::WWW_AUTHENTICATE, HeaderValue::from_static("Bearer"));
            return stamp(resp, &run_id);
        }
    }
    let resp = next.run(req).await;
    // a rerun finishing mid-request must not relabel the response
    stamp(resp, &run_id)
}

fn stamp(mut resp: Response, run_id: &str) -> Response {
    if !resp.headers().contains_key(RUN_ID_HEADER) {
        if let Ok(v) = HeaderValue::from_str(run_id) {
            resp.headers_mut().insert(RUN_ID_HEADER, v);
        }
    }
    resp
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/run", get(api::run_report))
        .route("/api/anomalies", get(api::list_anomalies))
        .route("/api/anomalies/{id}", get(api::get_anomaly))
        .route("/api/anomalies/{id}/decision", post(api::post_decision))
        .route("/api/series/{key}/{metric}", get(api::get_series))
        .route("/api/pipeline/rerun", post(api::post_rerun))
        .route("/api/pipeline/rerun/{job}", get(api::get_rerun))
        .fallback(api::not_found)
        .layer(middleware::from_fn_with_state(state.clone(), guard))
        .with_state(state)
}

/// Binds and serves until the process is stopped.
pub async fn serve(state: AppState, addr: std::net::SocketAddr) -> Result<(), ReviewError> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("review service on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}

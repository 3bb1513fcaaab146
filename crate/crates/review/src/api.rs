use std::collections::{BTreeMap, HashMap};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use countcurate::detect::{AnomalyKind, AnomalyRecord, AnomalyStatus};
use countcurate::ingest::read_canonical;
use countcurate::model::{state_by_abbrev, state_by_name, to_increments, ModelError};
use countcurate::pipeline::artifacts::proposed_repair;
use countcurate::pipeline::{append_decision, CurationDecision, DecisionLog, RunArtifacts, Verdict};
use countcurate::repair::{RepairMethod, RepairOverride};
use countcurate::{Metric, SourceId};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::{current_status, ApiError, AppState, DEFAULT_PAGE, MAX_PAGE};

type ApiResult = Result<Response, ApiError>;

fn internal(run: &RunArtifacts, e: impl std::fmt::Display) -> ApiError {
    ApiError::new(run.run_id(), StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

fn bad_request(run: &RunArtifacts, msg: impl Into<String>) -> ApiError {
    ApiError::new(run.run_id(), StatusCode::BAD_REQUEST, msg)
}

fn with_status(r: &AnomalyRecord, log: &DecisionLog) -> AnomalyRecord {
    let mut r = r.clone();
    r.status = current_status(&r, log);
    r
}

pub async fn not_found(State(state): State<AppState>) -> ApiError {
    ApiError::new(&state.run_id(), StatusCode::NOT_FOUND, "no such endpoint")
}

pub async fn run_report(State(state): State<AppState>) -> ApiResult {
    let run = state.current();
    Ok(Json(json!({ "run_id": run.run_id(), "report": run.report, "busy": state.is_busy() })).into_response())
}

#[derive(Debug, Default)]
struct Filters {
    status: Option<AnomalyStatus>,
    kind: Option<AnomalyKind>,
    state: Option<&'static str>,
    source: Option<SourceId>,
    metric: Option<Metric>,
    limit: usize,
    offset: usize,
}

fn parse_filters(q: &HashMap<String, String>) -> Result<Filters, String> {
    let mut f = Filters {
        limit: DEFAULT_PAGE,
        ..Default::default()
    };
    for (k, v) in q {
        match k.as_str() {
            "status" => f.status = Some(v.parse()?),
            "kind" => f.kind = Some(v.parse()?),
            "state" => {
                let info = state_by_name(v)
                    .or_else(|| state_by_abbrev(v))
                    .ok_or_else(|| format!("unknown state `{v}`"))?;
                f.state = Some(info.name);
            }
            "source" => f.source = Some(v.parse().map_err(|e: ModelError| e.to_string())?),
            "metric" => f.metric = Some(v.parse().map_err(|e: ModelError| e.to_string())?),
            "limit" => {
                let n: usize = v.parse().map_err(|_| format!("bad limit `{v}`"))?;
                f.limit = n.min(MAX_PAGE);
            }
            "offset" => f.offset = v.parse().map_err(|_| format!("bad offset `{v}`"))?,
            other => return Err(format!("unknown filter `{other}`")),
        }
    }
    Ok(f)
}

pub async fn list_anomalies(State(state): State<AppState>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let run = state.current();
    let f = parse_filters(&q).map_err(|e| bad_request(&run, e))?;
    let log = state.decisions().map_err(|e| internal(&run, e))?;
    // exported records are already in date-then-key order
    let matching: Vec<AnomalyRecord> = run
        .records
        .iter()
        .map(|r| with_status(r, &log))
        .filter(|r| {
            f.status.is_none_or(|s| r.status == s)
                && f.kind.is_none_or(|k| r.kind == k)
                && f.source.is_none_or(|s| r.source == s)
                && f.metric.is_none_or(|m| r.metric == m)
                && f.state.is_none_or(|s| r.key.state_name.as_deref() == Some(s))
        })
        .collect();
    let total = matching.len();
    let items: Vec<AnomalyRecord> = matching.into_iter().skip(f.offset).take(f.limit).collect();
    Ok(Json(json!({
        "run_id": run.run_id(),
        "total": total,
        "offset": f.offset,
        "limit": f.limit,
        "items": items,
    }))
    .into_response())
}

pub async fn get_anomaly(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let run = state.current();
    let log = state.decisions().map_err(|e| internal(&run, e))?;
    let rec = run
        .record(&id)
        .ok_or_else(|| ApiError::new(run.run_id(), StatusCode::NOT_FOUND, format!("no anomaly `{id}`")))?;
    Ok(Json(json!({
        "run_id": run.run_id(),
        "record": with_status(rec, &log),
        "decision": log.effective.get(&id),
    }))
    .into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionBody {
    pub verdict: String,
    #[serde(default)]
    pub period_override: Option<(usize, usize)>,
    #[serde(default)]
    pub method_override: Option<RepairMethod>,
    #[serde(default)]
    pub note: String,
    #[serde(default)]
    pub actor: String,
}

pub async fn post_decision(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<DecisionBody>, JsonRejection>,
) -> ApiResult {
    let run = state.current();
    let Json(body) = body.map_err(|e| bad_request(&run, e.body_text()))?;
    let rec = run
        .record(&id)
        .ok_or_else(|| ApiError::new(run.run_id(), StatusCode::NOT_FOUND, format!("no anomaly `{id}`")))?;
    if rec.status == AnomalyStatus::Repaired {
        return Err(ApiError::new(run.run_id(), StatusCode::CONFLICT, format!("anomaly `{id}` is already repaired")));
    }
    if rec.kind == AnomalyKind::OdViolation {
        return Err(ApiError::new(
            run.run_id(),
            StatusCode::CONFLICT,
            "order violations are repaired automatically",
        ));
    }
    let verdict: Verdict = body.verdict.parse().map_err(|e: String| bad_request(&run, e))?;
    if let Some((lo, hi)) = body.period_override {
        if (lo..=hi).contains(&rec.t_index) {
            return Err(bad_request(&run, format!("period {lo}..={hi} contains the flagged day {}", rec.t_index)));
        }
    }
    let mut decision = CurationDecision::new(id.clone(), verdict);
    decision.period_override = body.period_override;
    decision.method_override = body.method_override;
    decision.note = body.note;
    decision.actor = body.actor;
    decision.validate().map_err(|e| bad_request(&run, e.to_string()))?;

    let _guard = state.0.writer.lock().await;
    append_decision(&state.config().decision_log, &decision).map_err(|e| internal(&run, e))?;
    let log = state.decisions().map_err(|e| internal(&run, e))?;
    Ok(Json(json!({
        "run_id": run.run_id(),
        "record": with_status(rec, &log),
        "decision": decision,
    }))
    .into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesQuery {
    pub source: Option<String>,
}

pub async fn get_series(
    State(state): State<AppState>,
    Path((key, metric)): Path<(String, String)>,
    query: Result<Query<SeriesQuery>, axum::extract::rejection::QueryRejection>,
) -> ApiResult {
    let run = state.current();
    let Query(q) = query.map_err(|e| bad_request(&run, e.body_text()))?;
    let metric: Metric = metric.parse().map_err(|e: ModelError| bad_request(&run, e.to_string()))?;
    let source: Option<SourceId> = match q.source {
        Some(s) => Some(s.parse().map_err(|e: ModelError| bad_request(&run, e.to_string()))?),
        None => None,
    };
    let y = run.find_series(&key, metric, source).ok_or_else(|| {
        ApiError::new(run.run_id(), StatusCode::NOT_FOUND, format!("no {metric} series for `{key}`"))
    })?;
    let log = state.decisions().map_err(|e| internal(&run, e))?;
    let markers: Vec<AnomalyRecord> = run.records_for(y).into_iter().map(|r| with_status(r, &log)).collect();
    let overrides: BTreeMap<String, RepairOverride> =
        log.effective.iter().map(|(id, d)| (id.clone(), d.repair_override())).collect();
    let marker_refs: Vec<&AnomalyRecord> = markers.iter().collect();
    let overlay = proposed_repair(y, &marker_refs, &state.config().repair, &overrides).map(|r| {
        let z: Vec<f64> = countcurate::model::differences(&r.values);
        json!({ "values": r.values, "increments": z, "results": r.results })
    });

    // values written by the last run, when they differ from the input
    let entry = run
        .panels
        .iter()
        .find(|p| p.entry.source == y.source && p.entry.metric == y.metric)
        .map(|p| &p.entry);
    let mut repaired: Option<Vec<f64>> = None;
    if let Some(path) = entry.and_then(|e| e.repaired.as_ref()) {
        let panel = read_canonical(&run.dir.join(path), y.source, y.metric).map_err(|e| internal(&run, e))?;
        if let Some(s) = panel.get(&y.key) {
            if s.values() != y.values() {
                repaired = Some(s.values().to_vec());
            }
        }
    }

    let body: Value = json!({
        "run_id": run.run_id(),
        "key": y.key,
        "label": y.key.label(),
        "metric": y.metric,
        "source": y.source,
        "start_date": y.start_date,
        "raw": y.values(),
        "increments": to_increments(y).values,
        "repaired": repaired,
        "overlay": overlay,
        "markers": markers,
    });
    Ok(Json(body).into_response())
}

pub async fn post_rerun(State(state): State<AppState>) -> ApiResult {
    let run = state.current();
    let job = state
        .start_rerun()
        .ok_or_else(|| ApiError::new(run.run_id(), StatusCode::CONFLICT, "a rerun is already in progress"))?;
    let progress = format!("/api/pipeline/rerun/{}", job.job);
    let body = json!({ "run_id": run.run_id(), "job": job, "progress": progress });
    Ok((StatusCode::ACCEPTED, [(axum::http::header::LOCATION, progress)], Json(body)).into_response())
}

pub async fn get_rerun(State(state): State<AppState>, Path(job): Path<String>) -> ApiResult {
    let run = state.current();
    let found = job.parse::<u64>().ok().and_then(|id| state.job(id));
    let job = found.ok_or_else(|| ApiError::new(run.run_id(), StatusCode::NOT_FOUND, format!("no rerun job `{job}`")))?;
    Ok(Json(json!({ "run_id": run.run_id(), "job": job })).into_response())
}

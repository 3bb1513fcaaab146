use std::path::{Path, PathBuf};
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use countcurate::pipeline::{run_pipeline, PipelineConfig, Provenance};
use countcurate_review::{router, AppState, RUN_ID_HEADER};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    _dir: tempfile::TempDir,
    cfg: PipelineConfig,
    state: AppState,
}

fn nj_config(dir: &Path) -> PipelineConfig {
    let base = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/nj");
    let text = std::fs::read_to_string(base.join("pipeline.toml")).unwrap();
    let mut cfg = PipelineConfig::from_toml(&text, &base).unwrap();
    cfg.output_dir = dir.join("out");
    cfg.decision_log = dir.join("decisions.jsonl");
    cfg.cache_dir = dir.join("cache");
    cfg
}

fn fixture(token: Option<&str>) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let cfg = nj_config(dir.path());
    run_pipeline(&cfg).unwrap();
    let state = AppState::open(cfg.clone(), token.map(String::from)).unwrap();
    Fixture { _dir: dir, cfg, state }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value, String) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let run_id = resp.headers()[RUN_ID_HEADER].to_str().unwrap().to_string();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(v["run_id"], run_id, "body and header disagree on the run id");
    (status, v, run_id)
}

fn exported(cfg: &PipelineConfig) -> Vec<Value> {
    std::fs::read_to_string(cfg.output_dir.join("anomalies.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn spike_id(cfg: &PipelineConfig) -> String {
    exported(cfg)
        .into_iter()
        .find(|r| r["kind"] == "PointAnomaly" && r["source"] == "NYT" && r["date"] == "2020-06-25")
        .unwrap()["id"]
        .as_str()
        .unwrap()
        .to_string()
}

async fn wait_for(app: &Router, progress: &str) -> Value {
    for _ in 0..200 {
        let (status, v, _) = call(app, "GET", progress, None).await;
        assert_eq!(status, StatusCode::OK);
        if v["job"]["state"] != "running" {
            return v["job"].clone();
        }
        tokio::time::sleep(Duration::from_millis(25)).await;
    }
    panic!("rerun did not finish");
}

#[tokio::test]
async fn listing_filters_and_pages() {
    let fx = fixture(None);
    let app = router(fx.state.clone());
    let all = exported(&fx.cfg);

    let (status, v, run_id) = call(&app, "GET", "/api/anomalies?status=Detected", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(run_id, fx.state.run_id());
    let detected = all.iter().filter(|r| r["status"] == "Detected").count();
    assert!(detected > 0);
    assert_eq!(v["total"], detected);

    let (_, v, _) = call(&app, "GET", "/api/anomalies?kind=ChangePoint", None).await;
    let cps: Vec<&Value> = all.iter().filter(|r| r["kind"] == "ChangePoint").collect();
    assert_eq!(v["total"], cps.len());
    assert!(v["items"].as_array().unwrap().iter().all(|r| r["kind"] == "ChangePoint"));

    // the abbreviation and the name select the same records
    let (_, a, _) = call(&app, "GET", "/api/anomalies?state=NJ", None).await;
    let (_, b, _) = call(&app, "GET", "/api/anomalies?state=new%20jersey", None).await;
    assert_eq!(a["items"], b["items"]);
    assert!(a["items"].as_array().unwrap().iter().all(|r| r["key"]["state_name"] == "New Jersey"));

    // pages stitch back together in export order
    let (_, full, _) = call(&app, "GET", "/api/anomalies?limit=100000", None).await;
    assert_eq!(full["limit"], 500);
    let mut stitched = Vec::new();
    for offset in (0..all.len()).step_by(2) {
        let (_, page, _) = call(&app, "GET", &format!("/api/anomalies?limit=2&offset={offset}"), None).await;
        stitched.extend(page["items"].as_array().unwrap().iter().cloned());
    }
    assert_eq!(Value::Array(stitched), full["items"]);
    let ids: Vec<&Value> = all.iter().map(|r| &r["id"]).collect();
    let served: Vec<&Value> = full["items"].as_array().unwrap().iter().map(|r| &r["id"]).collect();
    assert_eq!(ids, served);

    for bad in ["kind=Spike", "status=open", "state=Narnia", "colour=red", "limit=-1", "metric=tests"] {
        let (status, v, _) = call(&app, "GET", &format!("/api/anomalies?{bad}"), None).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
        assert!(v["error"].is_string());
    }
}

#[tokio::test]
async fn series_payload_carries_the_overlay() {
    let fx = fixture(None);
    let app = router(fx.state.clone());
    let (status, v, _) = call(&app, "GET", "/api/series/New%20Jersey/death?source=NYT", None).await;
    assert_eq!(status, StatusCode::OK);
    let raw = v["raw"].as_array().unwrap();
    assert_eq!(v["increments"].as_array().unwrap().len(), raw.len());
    let overlay = &v["overlay"];
    assert_eq!(overlay["values"].as_array().unwrap().len(), raw.len());
    assert_eq!(overlay["values"].as_array().unwrap().last(), raw.last());
    let id = spike_id(&fx.cfg);
    assert!(v["markers"].as_array().unwrap().iter().any(|m| m["id"] == id.as_str()));
    assert!(overlay["results"].as_array().unwrap().iter().any(|r| r["anomaly_id"] == id.as_str()));

    // a series without point anomalies gets no overlay
    let (_, ny, _) = call(&app, "GET", "/api/series/New%20York/death?source=NYT", None).await;
    let has_points = ny["markers"].as_array().unwrap().iter().any(|m| m["kind"] == "PointAnomaly");
    assert_eq!(ny["overlay"].is_null(), !has_points);

    let (status, _, _) = call(&app, "GET", "/api/series/Atlantis/death", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _, _) = call(&app, "GET", "/api/series/New%20Jersey/vaccinations", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _, _) = call(&app, "GET", "/api/series/New%20Jersey/death?source=CDC", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    // dismissing the spike removes the overlay
    call(&app, "POST", &format!("/api/anomalies/{id}/decision"), Some(json!({"verdict": "Dismiss"}))).await;
    let (_, after, _) = call(&app, "GET", "/api/series/New%20Jersey/death?source=NYT", None).await;
    assert!(after["overlay"]["results"]
        .as_array()
        .is_none_or(|rs| rs.iter().all(|r| r["anomaly_id"] != id.as_str())));
}

#[tokio::test]
async fn decisions_are_logged_latest_wins() {
    let fx = fixture(None);
    let app = router(fx.state.clone());
    let id = spike_id(&fx.cfg);
    let uri = format!("/api/anomalies/{id}/decision");

    let (status, v, _) = call(&app, "POST", &uri, Some(json!({"verdict": "Confirm", "note": "batch release"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["record"]["status"], "Confirmed");
    let (_, v, _) = call(&app, "POST", &uri, Some(json!({"verdict": "dismiss"}))).await;
    assert_eq!(v["record"]["status"], "Dismissed");
    let (_, v, _) = call(&app, "POST", &uri, Some(json!({"verdict": "Confirm", "actor": "qa"}))).await;
    assert_eq!(v["record"]["status"], "Confirmed");
    let (_, v, _) = call(&app, "GET", &format!("/api/anomalies/{id}"), None).await;
    assert_eq!(v["record"]["status"], "Confirmed");
    assert_eq!(v["decision"]["actor"], "qa");

    // same file format the pipeline reads
    let log = countcurate::pipeline::read_decisions(&fx.cfg.decision_log).unwrap();
    assert!(log.corrupt.is_empty());
    assert_eq!(log.effective.len(), 1);
    assert_eq!(std::fs::read_to_string(&fx.cfg.decision_log).unwrap().lines().count(), 3);

    let (status, _, _) = call(&app, "POST", "/api/anomalies/0123456789abcdef/decision", Some(json!({"verdict": "Confirm"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _, _) = call(&app, "POST", &uri, Some(json!({"verdict": "maybe"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _, _) = call(&app, "POST", &uri, Some(json!({"verdit": "Confirm"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let t = exported(&fx.cfg).iter().find(|r| r["id"] == id.as_str()).unwrap()["t_index"].as_u64().unwrap();
    let (status, v, _) = call(&app, "POST", &uri, Some(json!({"verdict": "Confirm", "period_override": [t - 5, t]}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("flagged day"));
    assert_eq!(std::fs::read_to_string(&fx.cfg.decision_log).unwrap().lines().count(), 3);
}

#[tokio::test]
async fn rerun_applies_confirmed_repairs() {
    let fx = fixture(None);
    let app = router(fx.state.clone());
    let before_id = fx.state.run_id();
    let id = spike_id(&fx.cfg);
    let entry = fx.state.current().report.panels.iter().find(|p| p.source.as_str() == "NYT").unwrap().clone();
    let repaired_path = fx.cfg.output_dir.join(entry.repaired.as_ref().unwrap());
    let repaired_before = std::fs::read(&repaired_path).unwrap();

    call(&app, "POST", &format!("/api/anomalies/{id}/decision"), Some(json!({"verdict": "Confirm"}))).await;
    let (status, v, run_id) = call(&app, "POST", "/api/pipeline/rerun", None).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(run_id, before_id);
    let progress = v["progress"].as_str().unwrap().to_string();
    // a second request while the first is still running
    let (busy, _, _) = call(&app, "POST", "/api/pipeline/rerun", None).await;
    assert_eq!(busy, StatusCode::CONFLICT);

    let job = wait_for(&app, &progress).await;
    assert_eq!(job["state"], "succeeded", "{job}");
    let new_id = job["new_run_id"].as_str().unwrap();
    assert_ne!(new_id, before_id);
    assert_eq!(fx.state.run_id(), new_id);

    let (_, v, header) = call(&app, "GET", &format!("/api/anomalies/{id}"), None).await;
    assert_eq!(header, new_id);
    assert_eq!(v["record"]["status"], "Repaired");
    let (status, _, _) = call(&app, "POST", &format!("/api/anomalies/{id}/decision"), Some(json!({"verdict": "Dismiss"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);

    // exactly the confirmed anomaly's cells changed, and the sidecar says so
    let raw = countcurate::ingest::parse_canonical(&repaired_before, entry.source, entry.metric).unwrap();
    let now = countcurate::ingest::read_canonical(&repaired_path, entry.source, entry.metric).unwrap();
    let diff = countcurate::pipeline::panel_diff(&raw, &now);
    assert!(!diff.is_empty());
    assert!(diff.iter().all(|c| c.key == "New Jersey"));
    let prov: Provenance =
        serde_json::from_slice(&std::fs::read(fx.cfg.output_dir.join(entry.provenance.as_ref().unwrap())).unwrap()).unwrap();
    assert_eq!(prov.anomalies_repaired, vec![id.clone()]);
    let changed: Vec<usize> = diff.iter().map(|c| c.t_index).collect();
    let listed: Vec<usize> = prov.cells.iter().map(|c| c.t_index).collect();
    assert_eq!(changed, listed);

    let (_, series, _) = call(&app, "GET", "/api/series/New%20Jersey/death?source=NYT", None).await;
    assert!(series["repaired"].is_array());
}

#[tokio::test]
async fn rerun_without_new_decisions_changes_nothing() {
    let fx = fixture(None);
    let app = router(fx.state.clone());
    let snapshot = |dir: &Path| {
        let mut files: Vec<(String, Vec<u8>)> = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in std::fs::read_dir(d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    files.push((p.display().to_string(), std::fs::read(&p).unwrap()));
                }
            }
        }
        files.sort();
        files
    };
    let before = snapshot(&fx.cfg.output_dir);
    let (_, v, run_id) = call(&app, "POST", "/api/pipeline/rerun", None).await;
    let job = wait_for(&app, v["progress"].as_str().unwrap()).await;
    assert_eq!(job["new_run_id"], run_id.as_str());
    assert_eq!(snapshot(&fx.cfg.output_dir), before);

    let (status, _, _) = call(&app, "GET", "/api/pipeline/rerun/999", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn reads_are_repeatable_between_mutations() {
    let fx = fixture(None);
    let app = router(fx.state.clone());
    for uri in ["/api/anomalies", "/api/series/New%20Jersey/death", "/api/run"] {
        let (_, a, _) = call(&app, "GET", uri, None).await;
        let (_, b, _) = call(&app, "GET", uri, None).await;
        assert_eq!(a, b, "{uri}");
    }
    let (status, _, _) = call(&app, "GET", "/api/nothing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn bearer_token_gate() {
    let fx = fixture(Some("s3cret"));
    let app = router(fx.state.clone());
    let (status, v, _) = call(&app, "GET", "/api/anomalies", None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert!(v["error"].is_string());
    let req = Request::get("/api/anomalies")
        .header("authorization", "Bearer s3cret")
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()[RUN_ID_HEADER], fx.state.run_id().as_str());
    let req = Request::get("/api/anomalies")
        .header("authorization", "Bearer wrong")
        .body(Body::empty())
        .unwrap();
    assert_eq!(app.oneshot(req).await.unwrap().status(), StatusCode::UNAUTHORIZED);
}

#[test]
fn opening_an_empty_directory_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = nj_config(dir.path());
    assert!(AppState::open(cfg.clone(), None).is_err());
    let state = AppState::open_or_run(cfg, None).unwrap();
    assert_eq!(state.run_id().len(), 16);
}

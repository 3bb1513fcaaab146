use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn nj_toml() -> String {
    fixtures().join("nj/pipeline.toml").display().to_string()
}

fn countcurate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_countcurate"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("COUNTCURATE_OFFLINE")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn records(out: &Path) -> Vec<Value> {
    std::fs::read_to_string(out.join("anomalies.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn stages(out: &Path) -> Vec<(String, String)> {
    let report: Value = serde_json::from_slice(&std::fs::read(out.join("run_report.json")).unwrap()).unwrap();
    report["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| (s["stage"].as_str().unwrap().to_string(), s["status"].as_str().unwrap().to_string()))
        .collect()
}

#[test]
fn full_run_then_decide_then_repair() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out_s = out.to_str().unwrap();
    let o = countcurate(&["run", "--config", &nj_toml(), "--out", out_s]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("repair"));
    assert!(stages(&out).iter().all(|(_, s)| s == "ok"));
    // decision log and cache moved along with --out
    assert!(out.join("cache").is_dir());
    assert!(!fixtures().join("nj/out").exists());

    let spike = records(&out)
        .into_iter()
        .find(|r| r["kind"] == "PointAnomaly" && r["source"] == "NYT" && r["date"] == "2020-06-25")
        .unwrap();
    let id = spike["id"].as_str().unwrap();
    let o = countcurate(&["decide", id, "confirm", "--note", "batch", "--config", &nj_toml(), "--out", out_s]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(out.join("decisions.jsonl")).unwrap().lines().count(), 1);

    let o = countcurate(&["repair", "--config", &nj_toml(), "--out", out_s]);
    assert_eq!(code(&o), 0);
    let now = records(&out).into_iter().find(|r| r["id"] == id).unwrap();
    assert_eq!(now["status"], "Repaired");
    let skipped: Vec<String> = stages(&out).into_iter().filter(|(_, s)| s == "skipped").map(|(n, _)| n).collect();
    assert_eq!(skipped, ["compare", "seasonality"]);

    // repaired anomalies cannot be re-decided; unknown ids are input errors
    let o = countcurate(&["decide", id, "dismiss", "--config", &nj_toml(), "--out", out_s]);
    assert_eq!(code(&o), 2);
    let o = countcurate(&["decide", "0123456789abcdef", "confirm", "--config", &nj_toml(), "--out", out_s]);
    assert_eq!(code(&o), 3);
}

#[test]
fn period_override_by_date() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out_s = out.to_str().unwrap();
    assert_eq!(code(&countcurate(&["detect", "--config", &nj_toml(), "--out", out_s])), 0);
    let spike = records(&out)
        .into_iter()
        .find(|r| r["kind"] == "PointAnomaly" && r["date"] == "2020-06-25")
        .unwrap();
    let id = spike["id"].as_str().unwrap();
    let t = spike["t_index"].as_u64().unwrap();
    let bad = countcurate(&["decide", id, "confirm", "--period", "2020-06-01:2020-06-25", "--config", &nj_toml(), "--out", out_s]);
    assert_eq!(code(&bad), 3);
    let ok = countcurate(&["decide", id, "confirm", "--period", "2020-06-01:2020-06-24", "--config", &nj_toml(), "--out", out_s]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let line = std::fs::read_to_string(out.join("decisions.jsonl")).unwrap();
    let d: Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(d["period_override"][1], t - 1);
    assert_eq!(d["period_override"][0], t - 24);
}

#[test]
fn stage_selection_per_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fetch");
    let o = countcurate(&["fetch", "--config", &nj_toml(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(out.join("panels").is_dir());
    assert!(!out.join("anomalies.jsonl").exists());

    // no config file: sources given on the command line
    let out = tmp.path().join("cmp");
    let nyt = format!("nyt={}", fixtures().join("nj/nyt_states.csv").display());
    let atl = format!("atlantic={}", fixtures().join("nj/atlantic_states.csv").display());
    let o = countcurate(&[
        "compare", "--source", &nyt, "--source", &atl, "--level", "state", "--metric", "death", "--top", "1",
        "--offline", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let top: Value = serde_json::from_slice(
        &std::fs::read(out.join("compare/compare_state_death.top.json")).unwrap(),
    )
    .unwrap();
    assert!(top.to_string().contains("New"));
    assert_eq!(stages(&out)[1], ("compare".to_string(), "ok".to_string()));

    let out = tmp.path().join("season");
    let o = countcurate(&["seasonality", "--config", &nj_toml(), "--alpha", "0.01", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(std::fs::read_dir(out.join("seasonality")).unwrap().count() > 0);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out_s = out.to_str().unwrap();
    assert_eq!(code(&countcurate(&["--help"])), 0);
    assert_eq!(code(&countcurate(&["run", "--bogus"])), 3);
    assert_eq!(code(&countcurate(&["run", "--config", "/nonexistent.toml"])), 3);
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "level = \"galaxy\"\n").unwrap();
    assert_eq!(code(&countcurate(&["run", "--config", bad.to_str().unwrap()])), 3);
    assert_eq!(code(&countcurate(&["run", "--config", &nj_toml(), "--alpha", "2", "--out", out_s])), 3);
    assert_eq!(code(&countcurate(&["run", "--source", "nyt", "--out", out_s])), 3);

    // a source that cannot be read fails its stage
    let o = countcurate(&["run", "--config", &nj_toml(), "--source", "nyt=/nonexistent.csv", "--out", out_s]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("ingest"));
    // offline runs refuse URLs
    let o = countcurate(&["fetch", "--offline", "--source", "nyt=https://example.invalid/x.csv", "--level", "state", "--out", out_s]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("offline"));
}

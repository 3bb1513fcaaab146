//! Orchestration of the curation flow: ingest, compare, seasonality, detect,
//! apply curator decisions, repair and export.

pub mod artifacts;
pub mod config;
pub mod decisions;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use artifacts::RunArtifacts;
pub use config::{ConfigError, DetectSettings, PipelineConfig, RepairSettings, SourceConfig};
pub use decisions::{
    append_decision, read_decisions, CorruptLine, CurationDecision, DecisionError, DecisionLog, Verdict,
};

use crate::compare::compare_panels;
use crate::detect::{
    detect_change_points, detect_od_violations, detect_point_anomalies, sort_records, AnomalyKind,
    AnomalyRecord, AnomalyStatus,
};
use crate::ingest::{
    canonical_bytes, fetch_with_retry, normalize_geography, parse_source_with, GeoRuleSet, SnapshotCache,
};
use crate::model::{date_at, to_increments, CumulativeSeries, IncrementSeries, Level, Metric, Panel, SourceId};
use crate::repair::{integerize, repair_od_values, repair_outliers, RepairOverride, RepairResult, RepairStatus};
use crate::seasonality::{ensemble_seasonal, reports_to_csv};

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    std::io::Write::write_all(&mut tmp, bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

fn write_jsonl<T: Serialize>(path: &Path, values: &[T]) -> std::io::Result<()> {
    let mut bytes = Vec::new();
    for v in values {
        serde_json::to_writer(&mut bytes, v)?;
        bytes.push(b'\n');
    }
    atomic_write(path, &bytes)
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write run output: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub status: StageStatus,
    pub counts: BTreeMap<String, usize>,
    pub errors: Vec<String>,
}

impl StageReport {
    fn new(stage: &str) -> Self {
        StageReport {
            stage: stage.to_string(),
            status: StageStatus::Ok,
            counts: BTreeMap::new(),
            errors: Vec::new(),
        }
    }

    fn skipped(stage: &str) -> Self {
        StageReport {
            status: StageStatus::Skipped,
            ..Self::new(stage)
        }
    }

    fn count(&mut self, name: &str, n: usize) {
        *self.counts.entry(name.to_string()).or_default() += n;
    }

    fn fail(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::error!("{}: {msg}", self.stage);
        self.status = StageStatus::Failed;
        self.errors.push(msg);
    }
}

/// One ingested panel and where its artifacts live, relative to the output
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelEntry {
    pub source: SourceId,
    pub metric: Metric,
    pub level: Level,
    pub snapshot: String,
    pub canonical: String,
    pub repaired: Option<String>,
    pub provenance: Option<String>,
}

impl PanelEntry {
    pub fn stem(&self) -> String {
        panel_stem(self.source, self.metric, self.level)
    }
}

pub fn panel_stem(source: SourceId, metric: Metric, level: Level) -> String {
    format!("{source}_{metric}_{level}")
}

pub const RUN_REPORT: &str = "run_report.json";
pub const ANOMALY_FILE: &str = "anomalies.jsonl";
pub const REPAIR_FILE: &str = "repairs.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Hash of the effective configuration, the snapshot contents and the
    /// effective decisions.
    pub run_id: String,
    pub stages: Vec<StageReport>,
    pub panels: Vec<PanelEntry>,
    pub anomalies: Option<String>,
    pub repairs: Option<String>,
}

impl RunReport {
    pub fn failed(&self) -> bool {
        self.stages.iter().any(|s| s.status == StageStatus::Failed)
    }
}

/// Which optional stages to run; ingest always runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSelection {
    pub compare: bool,
    pub seasonality: bool,
    pub detect: bool,
    pub repair: bool,
}

impl StageSelection {
    pub const ALL: StageSelection = StageSelection {
        compare: true,
        seasonality: true,
        detect: true,
        repair: true,
    };
    pub const INGEST: StageSelection = StageSelection {
        compare: false,
        seasonality: false,
        detect: false,
        repair: false,
    };
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport, PipelineError> {
    run_stages(cfg, StageSelection::ALL)
}

struct Ingested {
    entry: PanelEntry,
    panel: Panel,
}

/// Runs ingest plus the selected stages, writing all artifacts under the
/// configured output directory.
pub fn run_stages(cfg: &PipelineConfig, sel: StageSelection) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    let rules = cfg.load_geo_rules()?;
    let out = cfg.output_dir.as_path();
    let mut stages = Vec::new();

    let (mut ingested, report) = ingest_stage(cfg, &rules);
    stages.push(report);
    let panels: Vec<&Panel> = ingested.iter().map(|i| &i.panel).collect();

    stages.push(if sel.compare {
        compare_stage(cfg, &panels)
    } else {
        StageReport::skipped("compare")
    });
    stages.push(if sel.seasonality {
        seasonality_stage(cfg, &panels)
    } else {
        StageReport::skipped("seasonality")
    });

    let mut records = Vec::new();
    let mut decisions = DecisionLog::default();
    let mut anomalies_file = None;
    let mut repairs_file = None;
    if sel.detect || sel.repair {
        let (r, report) = detect_stage(cfg, &panels);
        records = r;
        stages.push(report);
        let mut report = StageReport::new("decide");
        match read_decisions(&cfg.decision_log) {
            Ok(log) => decisions = log,
            Err(e) => report.fail(e.to_string()),
        }
        apply_decisions(&mut records, &decisions, &mut report);
        stages.push(report);
    } else {
        stages.push(StageReport::skipped("detect"));
        stages.push(StageReport::skipped("decide"));
    }

    if sel.repair {
        let (results, report) = repair_stage(cfg, &mut ingested, &mut records, &decisions);
        stages.push(report);
        write_jsonl(&out.join(REPAIR_FILE), &results)?;
        repairs_file = Some(REPAIR_FILE.to_string());
    } else {
        stages.push(StageReport::skipped("repair"));
    }
    if sel.detect || sel.repair {
        sort_records(&mut records);
        write_jsonl(&out.join(ANOMALY_FILE), &records)?;
        anomalies_file = Some(ANOMALY_FILE.to_string());
    }

    let report = RunReport {
        run_id: run_id(cfg, &ingested, &decisions),
        stages,
        panels: ingested.into_iter().map(|i| i.entry).collect(),
        anomalies: anomalies_file,
        repairs: repairs_file,
    };
    write_json(&out.join(RUN_REPORT), &report)?;
    Ok(report)
}

fn run_id(cfg: &PipelineConfig, ingested: &[Ingested], decisions: &DecisionLog) -> String {
    let mut h = Sha256::new();
    h.update(cfg.fingerprint().as_bytes());
    for i in ingested {
        h.update(panel_stem(i.entry.source, i.entry.metric, i.entry.level).as_bytes());
        h.update(i.entry.snapshot.as_bytes());
    }
    h.update(serde_json::to_vec(&decisions.effective.values().collect::<Vec<_>>()).expect("decisions serialize"));
    hex::encode(&h.finalize()[..8])
}

fn ingest_stage(cfg: &PipelineConfig, rules: &GeoRuleSet) -> (Vec<Ingested>, StageReport) {
    let mut report = StageReport::new("ingest");
    let cache = SnapshotCache::new(&cfg.cache_dir);
    let today = chrono::Utc::now().date_naive().to_string();
    let mut sources: Vec<&SourceConfig> = cfg.sources.iter().filter(|s| s.enabled).collect();
    sources.sort_by_key(|s| s.id);
    let mut out = Vec::new();
    for &metric in &cfg.metrics {
        for s in &sources {
            if !s.id.supports_metric(metric) || !s.id.supports_level(cfg.level) {
                continue;
            }
            let Some(endpoint) = s.endpoint_for(metric) else { continue };
            match ingest_one(cfg, rules, &cache, &today, s.id, endpoint, metric, &mut report) {
                Ok(i) => out.push(i),
                Err(e) => report.fail(format!("{} {metric}: {e}", s.id)),
            }
        }
    }
    report.count("panels", out.len());
    (out, report)
}

#[allow(clippy::too_many_arguments)]
fn ingest_one(
    cfg: &PipelineConfig,
    rules: &GeoRuleSet,
    cache: &SnapshotCache,
    today: &str,
    source: SourceId,
    endpoint: &str,
    metric: Metric,
    report: &mut StageReport,
) -> Result<Ingested, Box<dyn std::error::Error>> {
    let snap = fetch_with_retry(source, endpoint, cfg.offline, 3)?;
    if let Err(e) = cache.store(&snap, today, metric.as_str()) {
        log::warn!("snapshot cache: {e}");
        report.count("cache_errors", 1);
    }
    let parsed = parse_source_with(&snap, metric, &rules.aliases)?;
    report.count("rows_read", parsed.report.rows_read);
    report.count("row_errors", parsed.report.row_errors.len());
    let (normalized, norm_report) = normalize_geography(&parsed.panel, rules)?;
    report.count("excluded_series", norm_report.excluded.len());
    let panel = if normalized.level == cfg.level {
        normalized
    } else if normalized.level < cfg.level {
        return Err(format!("source publishes {} data only", normalized.level).into());
    } else {
        normalized.aggregate(cfg.level)?
    };
    report.count("series", panel.num_series());
    let stem = panel_stem(source, metric, cfg.level);
    let canonical = format!("panels/{stem}.csv");
    atomic_write(&cfg.output_dir.join(&canonical), &canonical_bytes(&panel)?)?;
    write_json(
        &cfg.output_dir.join(format!("panels/{stem}.ingest.json")),
        &serde_json::json!({
            "origin": snap.origin,
            "sha256": snap.sha256,
            "parse": parsed.report,
            "normalization": norm_report,
        }),
    )?;
    Ok(Ingested {
        entry: PanelEntry {
            source,
            metric,
            level: cfg.level,
            snapshot: snap.sha256,
            canonical,
            repaired: None,
            provenance: None,
        },
        panel,
    })
}

/// Restricts a panel to the configured analysis window.
fn analysis_window(cfg: &PipelineConfig, panel: &Panel) -> Result<Panel, crate::model::ModelError> {
    if cfg.analysis_start.is_none() && cfg.analysis_end.is_none() {
        return Ok(panel.clone());
    }
    let start = cfg.analysis_start.unwrap_or(panel.start_date);
    let end = cfg
        .analysis_end
        .unwrap_or_else(|| date_at(panel.start_date, panel.num_days().saturating_sub(1)));
    panel.window(start, end)
}

/// Offsets `[lo, hi)` of the analysis window within a series.
fn window_offsets(cfg: &PipelineConfig, start: chrono::NaiveDate, len: usize) -> (usize, usize) {
    let lo = cfg
        .analysis_start
        .map_or(0, |d| (d - start).num_days().clamp(0, len as i64) as usize);
    let hi = cfg
        .analysis_end
        .map_or(len, |d| ((d - start).num_days() + 1).clamp(0, len as i64) as usize);
    (lo, hi.max(lo))
}

fn compare_stage(cfg: &PipelineConfig, panels: &[&Panel]) -> StageReport {
    let mut report = StageReport::new("compare");
    let dir = cfg.output_dir.join("compare");
    for &metric in &cfg.metrics {
        let windowed: Result<Vec<Panel>, _> = panels
            .iter()
            .filter(|p| p.metric == metric)
            .map(|p| analysis_window(cfg, p))
            .collect();
        let windowed = match windowed {
            Ok(w) => w,
            Err(e) => {
                report.fail(format!("{metric}: {e}"));
                continue;
            }
        };
        if windowed.len() < 2 {
            report.count("metrics_skipped", 1);
            continue;
        }
        let refs: Vec<&Panel> = windowed.iter().collect();
        let result = compare_panels(&refs, cfg.norm).and_then(|r| {
            r.write(&dir, cfg.compare_threshold)?;
            let top = r.ranked(cfg.top_n);
            write_json(&dir.join(format!("compare_{}_{metric}.top.json", cfg.level)), &top)?;
            Ok(r)
        });
        match result {
            Ok(r) => report.count("keys_compared", r.rows.len()),
            Err(e) => report.fail(format!("{metric}: {e}")),
        }
    }
    report
}

fn seasonality_stage(cfg: &PipelineConfig, panels: &[&Panel]) -> StageReport {
    let mut report = StageReport::new("seasonality");
    for p in panels {
        let windowed = match analysis_window(cfg, p) {
            Ok(w) => w,
            Err(e) => {
                report.fail(format!("{} {}: {e}", p.source, p.metric));
                continue;
            }
        };
        let series: Vec<&CumulativeSeries> = windowed.series().collect();
        let outcomes: Vec<_> = series
            .par_iter()
            .map(|s| ensemble_seasonal(&to_increments(s), cfg.seasonality_alpha))
            .collect();
        let mut reports = Vec::new();
        for o in outcomes {
            match o {
                Ok(r) => reports.push(r),
                Err(_) => report.count("series_skipped", 1),
            }
        }
        report.count("series_tested", reports.len());
        report.count("series_seasonal", reports.iter().filter(|r| r.ensemble_verdict).count());
        let path = cfg
            .output_dir
            .join(format!("seasonality/seasonality_{}.csv", panel_stem(p.source, p.metric, p.level)));
        let written = reports_to_csv(&reports)
            .map_err(|e| e.to_string())
            .and_then(|b| atomic_write(&path, &b).map_err(|e| e.to_string()));
        if let Err(e) = written {
            report.fail(e);
        }
    }
    report
}

/// All anomalies of one series: order-dependency violations on the raw
/// values, point anomalies on the order-repaired values, and (optionally)
/// a change point on the order-repaired increments inside the analysis
/// window. Order violations are marked Repaired, since they are fixed
/// without review.
pub fn detect_series(
    y: &CumulativeSeries,
    settings: &DetectSettings,
    window: (usize, usize),
) -> (Vec<AnomalyRecord>, Vec<String>) {
    let mut errors = Vec::new();
    let mut records = detect_od_violations(y);
    for r in &mut records {
        r.status = AnomalyStatus::Repaired;
    }
    let repaired = y.with_values(repair_od_values(y.values())).expect("clamped values stay valid");
    match detect_point_anomalies(&repaired, &settings.speed) {
        Ok(r) => records.extend(r),
        Err(e) => errors.push(format!("{}: {e}", y.key)),
    }
    if settings.change_points {
        let z = to_increments(&repaired);
        let (lo, hi) = window;
        let zw = IncrementSeries {
            start_date: date_at(z.start_date, lo),
            values: z.values[lo..hi].to_vec(),
            ..z
        };
        // All-zero stretches carry no trend to segment.
        if zw.values.iter().any(|&v| v > 0.0) {
            match detect_change_points(&zw, &settings.change_point) {
                Ok(Some((_, mut rec))) => {
                    rec.t_index += lo;
                    records.push(rec);
                }
                Ok(None) => {}
                Err(e) => errors.push(format!("{}: change point: {e}", y.key)),
            }
        }
    }
    (records, errors)
}

fn detect_stage(cfg: &PipelineConfig, panels: &[&Panel]) -> (Vec<AnomalyRecord>, StageReport) {
    let mut report = StageReport::new("detect");
    let mut all = Vec::new();
    for p in panels {
        let window = window_offsets(cfg, p.start_date, p.num_days());
        let series: Vec<&CumulativeSeries> = p.series().collect();
        let found: Vec<_> = series
            .par_iter()
            .map(|s| detect_series(s, &cfg.detect, window))
            .collect();
        for (records, errors) in found {
            // Short or degenerate series are expected at county level.
            report.count("series_not_tested", errors.len());
            all.extend(records);
        }
    }
    for kind in [AnomalyKind::OdViolation, AnomalyKind::PointAnomaly, AnomalyKind::ChangePoint] {
        report.count(kind.as_str(), all.iter().filter(|r| r.kind == kind).count());
    }
    for r in all.iter().filter(|r| r.kind != AnomalyKind::OdViolation) {
        log::warn!("{}", r.warning());
    }
    (all, report)
}

/// Moves reviewable records to Confirmed or Dismissed per the effective
/// decision. Order violations are already Repaired and ignore decisions.
pub fn apply_decisions(records: &mut [AnomalyRecord], log: &DecisionLog, report: &mut StageReport) {
    let ids: BTreeSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let unmatched = log.effective.keys().filter(|k| !ids.contains(k.as_str())).count();
    report.count("decisions", log.effective.len());
    report.count("unmatched_decisions", unmatched);
    report.count("corrupt_lines", log.corrupt.len());
    for r in records.iter_mut() {
        let Some(d) = log.effective.get(&r.id) else { continue };
        let to = match d.verdict {
            Verdict::Confirm => AnomalyStatus::Confirmed,
            Verdict::Dismiss => AnomalyStatus::Dismissed,
        };
        if r.transition(to).is_ok() {
            report.count(to.as_str(), 1);
        }
    }
}

/// A repaired cumulative series and the per-anomaly outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRepair {
    pub values: Vec<f64>,
    pub results: Vec<RepairResult>,
}

/// Clamps order violations, then repairs the Confirmed point anomalies
/// among `records`, with Confirmed change points splitting the series into
/// regimes. Cells no repair could have touched keep their clamped values
/// exactly.
pub fn repair_series(
    y: &CumulativeSeries,
    records: &[&AnomalyRecord],
    settings: &RepairSettings,
    overrides: &BTreeMap<String, RepairOverride>,
) -> SeriesRepair {
    let clamped = repair_od_values(y.values());
    let confirmed: Vec<AnomalyRecord> = records
        .iter()
        .filter(|r| r.status == AnomalyStatus::Confirmed)
        .map(|r| (*r).clone())
        .collect();
    if !confirmed.iter().any(|r| r.kind == AnomalyKind::PointAnomaly) {
        return SeriesRepair {
            values: clamped,
            results: Vec::new(),
        };
    }
    let segments: Vec<usize> = confirmed
        .iter()
        .filter(|r| r.kind == AnomalyKind::ChangePoint)
        .map(|r| r.t_index)
        .collect();
    let y_clamped = y.with_values(clamped.clone()).expect("clamped values stay valid");
    let z = to_increments(&y_clamped);
    let lookup = |id: &str| overrides.get(id).cloned().unwrap_or_default();
    let (mut z_new, results) = repair_outliers(&z, &confirmed, &settings.config, &segments, &lookup);

    let mut touched = vec![false; clamped.len()];
    for r in results.iter().filter(|r| r.status == RepairStatus::Applied) {
        let cells: Vec<usize> = r.period.iter().copied().chain([r.t_index]).collect();
        if settings.integerize {
            let vals: Vec<f64> = cells.iter().map(|&t| z_new.values[t]).collect();
            for (&t, v) in cells.iter().zip(integerize(&vals)) {
                z_new.values[t] = v;
            }
        }
        let lo = *cells.iter().min().expect("non-empty");
        let hi = *cells.iter().max().expect("non-empty");
        touched[lo..hi].iter_mut().for_each(|t| *t = true);
    }
    let summed = crate::model::running_sum(&z_new.values);
    let values = clamped
        .iter()
        .zip(summed)
        .zip(&touched)
        .map(|((&c, s), &t)| if t { s.max(0.0) } else { c })
        .collect();
    SeriesRepair { values, results }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceCell {
    pub key: String,
    pub date: chrono::NaiveDate,
    pub t_index: usize,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: SourceId,
    pub metric: Metric,
    pub level: Level,
    pub canonical: String,
    pub od_violations_repaired: usize,
    pub anomalies_repaired: Vec<String>,
    /// Every cell whose value differs between the ingested and the
    /// repaired panel.
    pub cells: Vec<ProvenanceCell>,
}

/// Cells that differ between two panels with identical keys and dates.
pub fn panel_diff(before: &Panel, after: &Panel) -> Vec<ProvenanceCell> {
    let mut cells = Vec::new();
    for s in before.series() {
        let Some(a) = after.get(&s.key) else { continue };
        for (t, (&b, &v)) in s.values().iter().zip(a.values()).enumerate() {
            if b != v {
                cells.push(ProvenanceCell {
                    key: s.key.label(),
                    date: date_at(before.start_date, t),
                    t_index: t,
                    before: b,
                    after: v,
                });
            }
        }
    }
    cells
}

fn repair_stage(
    cfg: &PipelineConfig,
    ingested: &mut [Ingested],
    records: &mut [AnomalyRecord],
    decisions: &DecisionLog,
) -> (Vec<RepairResult>, StageReport) {
    let mut report = StageReport::new("repair");
    let overrides: BTreeMap<String, RepairOverride> = decisions
        .effective
        .iter()
        .map(|(id, d)| (id.clone(), d.repair_override()))
        .collect();
    let mut all_results = Vec::new();
    for ing in ingested.iter_mut() {
        let p = &ing.panel;
        let mut by_key: BTreeMap<&crate::model::SeriesKey, Vec<&AnomalyRecord>> = BTreeMap::new();
        for r in records.iter() {
            if r.source == p.source && r.metric == p.metric && r.key.level == p.level {
                by_key.entry(&r.key).or_default().push(r);
            }
        }
        let series: Vec<&CumulativeSeries> = p.series().collect();
        let repairs: Vec<SeriesRepair> = series
            .par_iter()
            .map(|s| {
                let recs = by_key.get(&s.key).map(Vec::as_slice).unwrap_or(&[]);
                repair_series(s, recs, &cfg.repair, &overrides)
            })
            .collect();
        let mut out = Panel::new(p.source, p.metric, p.level, p.start_date, p.num_days());
        let mut applied = Vec::new();
        let mut failed = false;
        for (s, rep) in series.iter().zip(repairs) {
            for r in &rep.results {
                report.count(&format!("{:?}", r.status), 1);
                if r.status == RepairStatus::Applied {
                    applied.push(r.anomaly_id.clone());
                }
            }
            all_results.extend(rep.results);
            if let Err(e) = out.insert_values(s.key.clone(), rep.values) {
                report.fail(format!("{}: {e}", s.key));
                failed = true;
            }
        }
        if failed {
            continue;
        }
        let od = by_key
            .values()
            .flatten()
            .filter(|r| r.kind == AnomalyKind::OdViolation)
            .count();
        let stem = ing.entry.stem();
        let repaired = format!("repaired/{stem}.csv");
        let provenance_path = format!("repaired/{stem}.provenance.json");
        let provenance = Provenance {
            source: p.source,
            metric: p.metric,
            level: p.level,
            canonical: ing.entry.canonical.clone(),
            od_violations_repaired: od,
            anomalies_repaired: applied.clone(),
            cells: panel_diff(p, &out),
        };
        report.count("cells_modified", provenance.cells.len());
        // Sidecar first: a repaired panel never exists without one.
        let written = write_json(&cfg.output_dir.join(&provenance_path), &provenance)
            .map_err(|e| e.to_string())
            .and_then(|_| canonical_bytes(&out).map_err(|e| e.to_string()))
            .and_then(|b| atomic_write(&cfg.output_dir.join(&repaired), &b).map_err(|e| e.to_string()));
        match written {
            Ok(()) => {
                ing.entry.repaired = Some(repaired);
                ing.entry.provenance = Some(provenance_path);
            }
            Err(e) => report.fail(e),
        }
        let applied: BTreeSet<String> = applied.into_iter().collect();
        for r in records.iter_mut().filter(|r| applied.contains(&r.id)) {
            let _ = r.transition(AnomalyStatus::Repaired);
        }
    }
    (all_results, report)
}

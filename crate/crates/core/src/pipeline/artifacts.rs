//! Read-side view of a finished run, as served to reviewers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{repair_series, PanelEntry, RepairSettings, RunReport, SeriesRepair, ANOMALY_FILE, RUN_REPORT};
use crate::detect::{AnomalyKind, AnomalyRecord, AnomalyStatus};
use crate::ingest::{read_canonical, IngestError};
use crate::model::{CumulativeSeries, Metric, Panel, SourceId};
use crate::repair::{RepairOverride, RepairStatus};

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Json {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Clone)]
pub struct LoadedPanel {
    pub entry: PanelEntry,
    pub panel: Panel,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub report: RunReport,
    pub records: Vec<AnomalyRecord>,
    pub panels: Vec<LoadedPanel>,
}

fn read(path: &Path) -> Result<String, ArtifactError> {
    std::fs::read_to_string(path).map_err(|source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl RunArtifacts {
    pub fn load(dir: &Path) -> Result<Self, ArtifactError> {
        let report_path = dir.join(RUN_REPORT);
        let report: RunReport = serde_json::from_str(&read(&report_path)?).map_err(|e| ArtifactError::Json {
            path: report_path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let mut records = Vec::new();
        let anomaly_path = dir.join(report.anomalies.as_deref().unwrap_or(ANOMALY_FILE));
        if anomaly_path.exists() {
            for (i, line) in read(&anomaly_path)?.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                records.push(serde_json::from_str(line).map_err(|e| ArtifactError::Json {
                    path: anomaly_path.clone(),
                    line: i + 1,
                    message: e.to_string(),
                })?);
            }
        }
        let panels = report
            .panels
            .iter()
            .map(|e| {
                let panel = read_canonical(&dir.join(&e.canonical), e.source, e.metric)?;
                Ok(LoadedPanel {
                    entry: e.clone(),
                    panel,
                })
            })
            .collect::<Result<_, ArtifactError>>()?;
        Ok(RunArtifacts {
            dir: dir.to_path_buf(),
            report,
            records,
            panels,
        })
    }

    pub fn run_id(&self) -> &str {
        &self.report.run_id
    }

    pub fn record(&self, id: &str) -> Option<&AnomalyRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// The series with this label and metric, from the given source or the
    /// first source (in source order) that has it.
    pub fn find_series(
        &self,
        label: &str,
        metric: Metric,
        source: Option<SourceId>,
    ) -> Option<&CumulativeSeries> {
        let mut candidates: Vec<&LoadedPanel> = self
            .panels
            .iter()
            .filter(|p| p.entry.metric == metric && source.is_none_or(|s| s == p.entry.source))
            .collect();
        candidates.sort_by_key(|p| p.entry.source);
        candidates.iter().find_map(|p| p.panel.get_by_label(label))
    }

    pub fn records_for(&self, y: &CumulativeSeries) -> Vec<&AnomalyRecord> {
        self.records
            .iter()
            .filter(|r| r.key == y.key && r.metric == y.metric && r.source == y.source)
            .collect()
    }

    /// The repaired cumulative values the series would get if every open
    /// point anomaly on it were confirmed; `None` when nothing would change
    /// beyond order-violation clamping.
    pub fn proposed_repair(
        &self,
        y: &CumulativeSeries,
        settings: &RepairSettings,
        overrides: &BTreeMap<String, RepairOverride>,
    ) -> Option<SeriesRepair> {
        proposed_repair(y, &self.records_for(y), settings, overrides)
    }
}

/// Repairs `y` as if every Detected point anomaly had been confirmed.
pub fn proposed_repair(
    y: &CumulativeSeries,
    records: &[&AnomalyRecord],
    settings: &RepairSettings,
    overrides: &BTreeMap<String, RepairOverride>,
) -> Option<SeriesRepair> {
    let assumed: Vec<AnomalyRecord> = records
        .iter()
        .map(|r| {
            let mut r = (*r).clone();
            if r.kind == AnomalyKind::PointAnomaly && r.status == AnomalyStatus::Detected {
                r.status = AnomalyStatus::Confirmed;
            }
            r
        })
        .collect();
    let refs: Vec<&AnomalyRecord> = assumed.iter().collect();
    let rep = repair_series(y, &refs, settings, overrides);
    rep.results
        .iter()
        .any(|r| r.status == RepairStatus::Applied)
        .then_some(rep)
}

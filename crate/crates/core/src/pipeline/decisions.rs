//! Append-only JSON-lines log of curator verdicts.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::repair::{RepairMethod, RepairOverride};

#[derive(Debug, Error)]
pub enum DecisionError {
    #[error("malformed anomaly id `{0}`")]
    BadId(String),
    #[error("period override {0}..={1} is empty")]
    EmptyPeriod(usize, usize),
    #[error("decision log: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Confirm,
    Dismiss,
}

impl std::str::FromStr for Verdict {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Confirm" | "confirm" => Ok(Verdict::Confirm),
            "Dismiss" | "dismiss" => Ok(Verdict::Dismiss),
            _ => Err(format!("unknown verdict `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationDecision {
    pub anomaly_id: String,
    pub verdict: Verdict,
    /// Inclusive day-offset range replacing the default problematic period.
    #[serde(default)]
    pub period_override: Option<(usize, usize)>,
    #[serde(default)]
    pub method_override: Option<RepairMethod>,
    #[serde(default)]
    pub note: String,
    pub decided_at: DateTime<Utc>,
    #[serde(default)]
    pub actor: String,
}

impl CurationDecision {
    pub fn new(anomaly_id: impl Into<String>, verdict: Verdict) -> Self {
        CurationDecision {
            anomaly_id: anomaly_id.into(),
            verdict,
            period_override: None,
            method_override: None,
            note: String::new(),
            decided_at: Utc::now(),
            actor: String::new(),
        }
    }

    pub fn validate(&self) -> Result<(), DecisionError> {
        if !is_anomaly_id(&self.anomaly_id) {
            return Err(DecisionError::BadId(self.anomaly_id.clone()));
        }
        if let Some((lo, hi)) = self.period_override {
            if lo > hi {
                return Err(DecisionError::EmptyPeriod(lo, hi));
            }
        }
        Ok(())
    }

    pub fn repair_override(&self) -> RepairOverride {
        RepairOverride {
            period: self.period_override,
            method: self.method_override,
        }
    }
}

/// Anomaly ids are 16 lowercase hex digits.
pub fn is_anomaly_id(id: &str) -> bool {
    id.len() == 16 && id.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

static LOG_WRITER: Mutex<()> = Mutex::new(());

pub fn append_decision(path: &Path, decision: &CurationDecision) -> Result<(), DecisionError> {
    decision.validate()?;
    let mut line = serde_json::to_vec(decision).map_err(std::io::Error::from)?;
    line.push(b'\n');
    let _guard = LOG_WRITER.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(&line)?;
    f.sync_data()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorruptLine {
    pub line: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecisionLog {
    /// Effective decision per anomaly id.
    pub effective: BTreeMap<String, CurationDecision>,
    pub corrupt: Vec<CorruptLine>,
}

/// Reads the log, keeping the latest decision per id; on equal timestamps
/// the later line wins. A missing file is an empty log.
pub fn read_decisions(path: &Path) -> Result<DecisionLog, DecisionError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(DecisionLog::default()),
        Err(e) => return Err(e.into()),
    };
    let mut log = DecisionLog::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<CurationDecision>(line)
            .map_err(|e| e.to_string())
            .and_then(|d| d.validate().map(|_| d).map_err(|e| e.to_string()));
        match parsed {
            Ok(d) => {
                let newer = log
                    .effective
                    .get(&d.anomaly_id)
                    .is_none_or(|old| d.decided_at >= old.decided_at);
                if newer {
                    log.effective.insert(d.anomaly_id.clone(), d);
                }
            }
            Err(error) => {
                log::warn!("decision log line {} skipped: {error}", i + 1);
                log.corrupt.push(CorruptLine { line: i + 1, error });
            }
        }
    }
    Ok(log)
}

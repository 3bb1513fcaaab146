//! Order-dependency violations, speed-constraint point anomalies and
//! segmented-regression change points.

mod changepoint;
mod od;
mod point;

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use changepoint::{
    davies_p, detect_change_points, fit_change_point, ChangePointConfig, ChangePointFit, Link,
};
pub use od::detect_od_violations;
pub use point::{detect_point_anomalies, SpeedConstraintConfig};

use crate::model::{Metric, SeriesKey, SourceId};
use crate::numerics::NumericsError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("series of length {len} is too short, need {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("negative increment {value} at offset {index}; repair order violations first")]
    NegativeIncrement { index: usize, value: f64 },
    #[error("no candidate breakpoint could be fitted: {0}")]
    NoConvergence(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot move anomaly from {from} to {to}")]
    InvalidTransition { from: AnomalyStatus, to: AnomalyStatus },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AnomalyKind {
    OdViolation,
    PointAnomaly,
    ChangePoint,
}

impl AnomalyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AnomalyKind::OdViolation => "OdViolation",
            AnomalyKind::PointAnomaly => "PointAnomaly",
            AnomalyKind::ChangePoint => "ChangePoint",
        }
    }
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnomalyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "OdViolation" => Ok(AnomalyKind::OdViolation),
            "PointAnomaly" => Ok(AnomalyKind::PointAnomaly),
            "ChangePoint" => Ok(AnomalyKind::ChangePoint),
            _ => Err(format!("unknown anomaly kind `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AnomalyStatus {
    Detected,
    Confirmed,
    Dismissed,
    Repaired,
}

impl AnomalyStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            AnomalyStatus::Detected => "Detected",
            AnomalyStatus::Confirmed => "Confirmed",
            AnomalyStatus::Dismissed => "Dismissed",
            AnomalyStatus::Repaired => "Repaired",
        }
    }

    pub fn can_become(self, to: AnomalyStatus) -> bool {
        use AnomalyStatus::*;
        matches!(
            (self, to),
            (Detected, Confirmed) | (Detected, Dismissed) | (Confirmed, Repaired)
        )
    }
}

impl fmt::Display for AnomalyStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnomalyStatus {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Detected" => Ok(AnomalyStatus::Detected),
            "Confirmed" => Ok(AnomalyStatus::Confirmed),
            "Dismissed" => Ok(AnomalyStatus::Dismissed),
            "Repaired" => Ok(AnomalyStatus::Repaired),
            _ => Err(format!("unknown status `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnomalyDetail {
    Od {
        previous: f64,
        current: f64,
    },
    Point {
        window_start: usize,
        window_end: usize,
        window_speed: f64,
        /// `None` when the window speed is not positive.
        jump_ratio: Option<f64>,
        rule: String,
    },
    ChangePoint {
        phi: f64,
        beta0: f64,
        beta1: f64,
        beta2: f64,
        se_beta2: f64,
        wald_p: f64,
        adjusted_p: f64,
        link: Link,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyRecord {
    pub id: String,
    pub key: SeriesKey,
    pub metric: Metric,
    pub source: SourceId,
    pub kind: AnomalyKind,
    /// Day offset from the series start date.
    pub t_index: usize,
    pub date: NaiveDate,
    pub magnitude: f64,
    pub detail: AnomalyDetail,
    pub status: AnomalyStatus,
}

/// Stable identifier derived from what the anomaly is about, not from when
/// or in which order it was found.
pub fn anomaly_id(
    key: &SeriesKey,
    metric: Metric,
    source: SourceId,
    kind: AnomalyKind,
    date: NaiveDate,
) -> String {
    let mut h = Sha256::new();
    for part in [
        key.level.as_str(),
        &key.label(),
        metric.as_str(),
        source.as_str(),
        kind.as_str(),
        &date.to_string(),
    ] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    hex::encode(&h.finalize()[..8])
}

impl AnomalyRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        key: &SeriesKey,
        metric: Metric,
        source: SourceId,
        kind: AnomalyKind,
        start_date: NaiveDate,
        t_index: usize,
        magnitude: f64,
        detail: AnomalyDetail,
    ) -> Self {
        let date = crate::model::date_at(start_date, t_index);
        AnomalyRecord {
            id: anomaly_id(key, metric, source, kind, date),
            key: key.clone(),
            metric,
            source,
            kind,
            t_index,
            date,
            magnitude,
            detail,
            status: AnomalyStatus::Detected,
        }
    }

    pub fn transition(&mut self, to: AnomalyStatus) -> Result<(), DetectError> {
        if !self.status.can_become(to) {
            return Err(DetectError::InvalidTransition {
                from: self.status,
                to,
            });
        }
        self.status = to;
        Ok(())
    }

    /// One-line message for the curator.
    pub fn warning(&self) -> String {
        format!(
            "warning: {} {} {} {} on {} (magnitude {})",
            self.kind, self.source, self.metric, self.key, self.date, self.magnitude
        )
    }
}

/// Sort order used in every export: date, then key, kind, source, metric.
pub fn sort_records(records: &mut [AnomalyRecord]) {
    records.sort_by(|a, b| {
        a.date
            .cmp(&b.date)
            .then_with(|| a.key.cmp(&b.key))
            .then_with(|| a.kind.cmp(&b.kind))
            .then_with(|| a.source.cmp(&b.source))
            .then_with(|| a.metric.cmp(&b.metric))
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lifecycle() {
        use AnomalyStatus::*;
        assert!(Detected.can_become(Confirmed));
        assert!(Detected.can_become(Dismissed));
        assert!(Confirmed.can_become(Repaired));
        assert!(!Dismissed.can_become(Repaired));
        assert!(!Detected.can_become(Repaired));
        assert!(!Repaired.can_become(Detected));
    }

    #[test]
    fn ids_are_stable_and_distinct() {
        let d = NaiveDate::from_ymd_opt(2020, 6, 25).unwrap();
        let k = SeriesKey::state("New Jersey");
        let a = anomaly_id(&k, Metric::Death, SourceId::NYT, AnomalyKind::PointAnomaly, d);
        assert_eq!(a, anomaly_id(&k, Metric::Death, SourceId::NYT, AnomalyKind::PointAnomaly, d));
        assert_ne!(a, anomaly_id(&k, Metric::Death, SourceId::JHU, AnomalyKind::PointAnomaly, d));
        assert_eq!(a.len(), 16);
    }
}

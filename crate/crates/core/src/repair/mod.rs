//! Replacement estimates for flagged days, residual redistribution and
//! order-dependency repair.

mod fit;
mod ingarch;
mod od;
mod redistribute;
mod trend;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fit::{fit_dropping, ReducedFit};
pub use ingarch::{fit_ingarch, IngarchFit, LagTransform};
pub use od::{repair_od, repair_od_values};
pub use redistribute::{integerize, redistribute_residual, ConservationReceipt, Redistribution};
pub use trend::{
    clep_combine, clep_forecasts, fit_exp_ar, fit_exp_trend, fit_lin_trend, predict_next,
    PredictorForecast, TrendFit, TrendKind, CLEP_EPS,
};

use crate::detect::{AnomalyKind, AnomalyRecord, AnomalyStatus};
use crate::model::IncrementSeries;
use crate::numerics::{IrlsOptions, NumericsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RepairError {
    #[error("negative increment {value} at offset {index}; repair order violations first")]
    NegativeIncrement { index: usize, value: f64 },
    #[error("window of length {len} is too short, need {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("problematic period is empty")]
    EmptyPeriod,
    #[error("problematic period contains the outlier day {0}")]
    PeriodContainsOutlier(usize),
    #[error("index {0} is outside the series")]
    OutOfRange(usize),
    #[error("model diverged: {0}")]
    Diverged(String),
    #[error("no convergence after {iterations} iterations (deviance {deviance})")]
    NotConverged { iterations: usize, deviance: f64 },
    #[error("no predictor could be fitted")]
    NoPredictor,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum RepairMethod {
    Ingarch {
        p: usize,
        q: usize,
        #[serde(default)]
        transform: LagTransform,
    },
    Clep,
    Trend { kind: TrendKind },
    /// Curator-supplied replacement value.
    Manual { value: f64 },
}

impl Default for RepairMethod {
    fn default() -> Self {
        RepairMethod::Clep
    }
}

impl RepairMethod {
    pub fn label(&self) -> &'static str {
        match self {
            RepairMethod::Ingarch { .. } => "Ingarch",
            RepairMethod::Clep => "Clep",
            RepairMethod::Trend { .. } => "Trend",
            RepairMethod::Manual { .. } => "Manual",
        }
    }
}

/// Threshold below which an outlier's residual is left alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum DeltaRule {
    Fixed { value: f64 },
    /// `max(multiplier · sqrt(ẑ + 1), floor)`
    PoissonScale { multiplier: f64, floor: f64 },
}

impl Default for DeltaRule {
    fn default() -> Self {
        DeltaRule::PoissonScale {
            multiplier: 3.0,
            floor: 10.0,
        }
    }
}

impl DeltaRule {
    pub fn delta(&self, z_hat: f64) -> f64 {
        match *self {
            DeltaRule::Fixed { value } => value,
            DeltaRule::PoissonScale { multiplier, floor } => {
                (multiplier * (z_hat.max(0.0) + 1.0).sqrt()).max(floor)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RepairConfig {
    pub method: RepairMethod,
    pub delta: DeltaRule,
    /// Most days of history used by the trend and CLEP predictors.
    pub lookback: usize,
    /// Most days of history used by INGARCH, which has more parameters.
    pub ingarch_lookback: usize,
}

impl Default for RepairConfig {
    fn default() -> Self {
        RepairConfig {
            method: RepairMethod::default(),
            delta: DeltaRule::default(),
            lookback: 28,
            ingarch_lookback: 56,
        }
    }
}

/// Estimate of `Z_{t_m}` from the days `[window_start, t_m)`. The flagged
/// day and everything after it are never seen by the models.
pub fn estimate_replacement(
    z: &[f64],
    t_m: usize,
    window_start: usize,
    method: &RepairMethod,
) -> Result<f64, RepairError> {
    if t_m >= z.len() {
        return Err(RepairError::OutOfRange(t_m));
    }
    let window = &z[window_start.min(t_m)..t_m];
    let t0 = (window_start + 1) as f64;
    let est = match *method {
        RepairMethod::Manual { value } => value,
        RepairMethod::Trend { kind } => predict_next(kind, window, t0)?,
        RepairMethod::Clep => {
            let forecasts: Vec<PredictorForecast> =
                clep_forecasts(window, t0).into_iter().map(|(_, f)| f).collect();
            clep_combine(&forecasts, CLEP_EPS).ok_or(RepairError::NoPredictor)?
        }
        RepairMethod::Ingarch { p, q, transform } => {
            let fit = fit_ingarch(window, p, q, transform, IrlsOptions::default())?;
            fit.predict_next(window)
        }
    };
    if !est.is_finite() {
        return Err(RepairError::Diverged(format!("estimate {est}")));
    }
    Ok(est.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RepairStatus {
    Applied,
    /// `|Z − Ẑ| ≤ δ`
    BelowThreshold,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairResult {
    pub anomaly_id: String,
    pub status: RepairStatus,
    pub method: String,
    pub t_index: usize,
    pub original: f64,
    pub z_hat: Option<f64>,
    pub delta: Option<f64>,
    pub period: Vec<usize>,
    pub repaired_increments: Vec<f64>,
    pub conservation_receipt: Option<ConservationReceipt>,
    pub uniform_fallback: bool,
    pub clamped: bool,
    pub error: Option<String>,
}

/// Per-anomaly adjustments coming from curation decisions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RepairOverride {
    /// Inclusive day-offset range for the problematic period.
    pub period: Option<(usize, usize)>,
    pub method: Option<RepairMethod>,
}

/// Repairs confirmed point anomalies in time order, each estimate seeing
/// the repairs made before it. `segment_starts` are offsets where a
/// confirmed change point begins a new regime; default periods and fitting
/// windows never reach back across one.
pub fn repair_outliers(
    z: &IncrementSeries,
    anomalies: &[AnomalyRecord],
    cfg: &RepairConfig,
    segment_starts: &[usize],
    overrides: &dyn Fn(&str) -> RepairOverride,
) -> (IncrementSeries, Vec<RepairResult>) {
    let mut values = z.values.clone();
    let mut todo: Vec<&AnomalyRecord> = anomalies
        .iter()
        .filter(|a| a.kind == AnomalyKind::PointAnomaly && a.status == AnomalyStatus::Confirmed)
        .collect();
    todo.sort_by(|a, b| a.t_index.cmp(&b.t_index).then_with(|| a.id.cmp(&b.id)));
    let mut results = Vec::new();
    for a in todo {
        let t_m = a.t_index;
        let ov = overrides(&a.id);
        let method = ov.method.unwrap_or(cfg.method);
        let seg = segment_starts
            .iter()
            .copied()
            .filter(|&s| s < t_m)
            .max()
            .unwrap_or(0);
        let mut res = RepairResult {
            anomaly_id: a.id.clone(),
            status: RepairStatus::Failed,
            method: method.label().to_string(),
            t_index: t_m,
            original: values.get(t_m).copied().unwrap_or(f64::NAN),
            z_hat: None,
            delta: None,
            period: Vec::new(),
            repaired_increments: Vec::new(),
            conservation_receipt: None,
            uniform_fallback: false,
            clamped: false,
            error: None,
        };
        let period: Vec<usize> = match ov.period {
            Some((lo, hi)) if (lo..=hi).contains(&t_m) => {
                res.error = Some(RepairError::PeriodContainsOutlier(t_m).to_string());
                results.push(res);
                continue;
            }
            Some((lo, hi)) => (lo..=hi).collect(),
            None => (seg..t_m).collect(),
        };
        let lookback = match method {
            RepairMethod::Ingarch { .. } => cfg.ingarch_lookback,
            _ => cfg.lookback,
        };
        let window_start = seg.max(t_m.saturating_sub(lookback));
        let outcome = estimate_replacement(&values, t_m, window_start, &method).and_then(|z_hat| {
            let delta = cfg.delta.delta(z_hat);
            res.z_hat = Some(z_hat);
            res.delta = Some(delta);
            if (values[t_m] - z_hat).abs() <= delta {
                res.status = RepairStatus::BelowThreshold;
                return Ok(None);
            }
            redistribute_residual(&mut values, t_m, z_hat, &period).map(Some)
        });
        match outcome {
            Ok(Some(r)) => {
                res.status = RepairStatus::Applied;
                res.z_hat = Some(r.z_hat);
                res.period = r.period;
                res.repaired_increments = r.repaired_increments;
                res.conservation_receipt = Some(r.receipt);
                res.uniform_fallback = r.uniform_fallback;
                res.clamped = r.clamped;
            }
            Ok(None) => {}
            Err(e) => {
                res.status = RepairStatus::Failed;
                res.error = Some(e.to_string());
            }
        }
        results.push(res);
    }
    (z.with_values(values), results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    #[test]
    fn delta_rule_default() {
        let d = DeltaRule::default();
        assert_eq!(d.delta(0.0), 10.0);
        assert!((d.delta(99.0) - 30.0).abs() < 1e-12);
    }

    #[test]
    fn nothing_confirmed_is_identity() {
        let z = IncrementSeries::from_values(
            NaiveDate::from_ymd_opt(2020, 3, 1).unwrap(),
            vec![1.0, 2.0, 100.0],
        );
        let (out, res) = repair_outliers(&z, &[], &RepairConfig::default(), &[], &|_| RepairOverride::default());
        assert_eq!(out, z);
        assert!(res.is_empty());
    }
}

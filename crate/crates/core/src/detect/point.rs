use serde::{Deserialize, Serialize};

use super::{AnomalyDetail, AnomalyKind, AnomalyRecord, DetectError};
use crate::model::CumulativeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeedConstraintConfig {
    /// Window span `t2 - t1` in days.
    pub window_w: usize,
    /// Cap on the window's average daily growth; `None` disables it.
    pub sc1: Option<f64>,
    /// Cap on the ratio of a one-day jump to the window's average speed.
    pub sc2: f64,
    /// Jumps below this count are never flagged by the ratio rule.
    pub min_count: f64,
}

impl Default for SpeedConstraintConfig {
    fn default() -> Self {
        SpeedConstraintConfig {
            window_w: 14,
            sc1: None,
            sc2: 5.0,
            min_count: 30.0,
        }
    }
}

impl SpeedConstraintConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if self.window_w < 2 {
            return Err(DetectError::Config(format!("window_w = {} < 2", self.window_w)));
        }
        if !(self.sc2 > 1.0) {
            return Err(DetectError::Config(format!("sc2 = {} must exceed 1", self.sc2)));
        }
        if !(self.min_count >= 0.0) {
            return Err(DetectError::Config("min_count must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Flags days whose one-day jump is out of line with the surrounding
/// growth speed.
///
/// Day `d` is judged against the window `[t1, t1 + w]` with `t1 = d - 1`,
/// so `d` is the window's first new day; near the end of the series the
/// window is pinned to the last `w + 1` days. Series shorter than `w + 1`
/// yield no flags.
pub fn detect_point_anomalies(
    y: &CumulativeSeries,
    cfg: &SpeedConstraintConfig,
) -> Result<Vec<AnomalyRecord>, DetectError> {
    cfg.validate()?;
    let v = y.values();
    let n = v.len();
    let w = cfg.window_w;
    if n < w + 1 {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for d in 1..n {
        let t1 = (d - 1).min(n - 1 - w);
        let t2 = t1 + w;
        let speed = (v[t2] - v[t1]) / w as f64;
        let jump = v[d] - v[d - 1];
        let ratio = if speed > 0.0 {
            Some(jump / speed)
        } else {
            None
        };
        let ratio_hit = jump >= cfg.min_count
            && jump > 0.0
            && match ratio {
                Some(r) => r >= cfg.sc2,
                None => true,
            };
        let speed_hit = cfg.sc1.is_some_and(|cap| speed >= cap);
        if !(ratio_hit || speed_hit) {
            continue;
        }
        let rule = match (speed_hit, ratio_hit) {
            (true, true) => "sc1+sc2",
            (true, false) => "sc1",
            _ => "sc2",
        };
        out.push(AnomalyRecord::new(
            &y.key,
            y.metric,
            y.source,
            AnomalyKind::PointAnomaly,
            y.start_date,
            d,
            jump,
            AnomalyDetail::Point {
                window_start: t1,
                window_end: t2,
                window_speed: speed,
                jump_ratio: ratio,
                rule: rule.into(),
            },
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Metric, SeriesKey, SourceId};
    use chrono::NaiveDate;

    fn y(v: &[f64]) -> CumulativeSeries {
        CumulativeSeries::new(
            SeriesKey::state("Iowa"),
            Metric::Infection,
            SourceId::NYT,
            NaiveDate::from_ymd_opt(2020, 3, 1).unwrap(),
            v.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn linear_growth_is_clean() {
        let s = y(&(0..60).map(|t| 10.0 * t as f64).collect::<Vec<_>>());
        let cfg = SpeedConstraintConfig { sc2: 1.01, min_count: 0.0, ..Default::default() };
        assert!(detect_point_anomalies(&s, &cfg).unwrap().is_empty());
    }

    #[test]
    fn threshold_boundary() {
        let s = y(&[0.0, 10.0, 20.0, 30.0, 130.0, 140.0, 150.0]);
        let at = |sc2| {
            let cfg = SpeedConstraintConfig { window_w: 6, sc1: None, sc2, min_count: 30.0 };
            detect_point_anomalies(&s, &cfg).unwrap()
        };
        assert!(at(5.0).is_empty());
        let hits = at(4.0);
        assert_eq!(hits.len(), 1);
        assert_eq!((hits[0].t_index, hits[0].magnitude), (4, 100.0));
    }

    #[test]
    fn jump_after_flat_window() {
        let mut v = vec![100.0; 20];
        v.extend(vec![200.0; 20]);
        let hits = detect_point_anomalies(&y(&v), &SpeedConstraintConfig::default()).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].t_index, 20);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SpeedConstraintConfig { sc2: 1.0, ..Default::default() };
        assert!(detect_point_anomalies(&y(&[1.0; 30]), &cfg).is_err());
    }
}

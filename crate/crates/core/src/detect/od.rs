use super::{AnomalyDetail, AnomalyKind, AnomalyRecord};
use crate::model::CumulativeSeries;

/// One record per day whose cumulative value is below the previous day's.
pub fn detect_od_violations(y: &CumulativeSeries) -> Vec<AnomalyRecord> {
    let v = y.values();
    (1..v.len())
        .filter(|&t| v[t] < v[t - 1])
        .map(|t| {
            AnomalyRecord::new(
                &y.key,
                y.metric,
                y.source,
                AnomalyKind::OdViolation,
                y.start_date,
                t,
                v[t] - v[t - 1],
                AnomalyDetail::Od {
                    previous: v[t - 1],
                    current: v[t],
                },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Metric, SeriesKey, SourceId};
    use chrono::NaiveDate;

    fn y(v: &[f64]) -> CumulativeSeries {
        CumulativeSeries::new(
            SeriesKey::state("Iowa"),
            Metric::Death,
            SourceId::JHU,
            NaiveDate::from_ymd_opt(2020, 1, 22).unwrap(),
            v.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn examples() {
        assert!(detect_od_violations(&y(&[1.0, 2.0, 2.0, 5.0])).is_empty());
        let r = detect_od_violations(&y(&[1.0, 3.0, 2.0, 4.0]));
        assert_eq!(r.len(), 1);
        assert_eq!((r[0].t_index, r[0].magnitude), (2, -1.0));
        let r = detect_od_violations(&y(&[5.0, 4.0, 3.0]));
        assert_eq!(r.iter().map(|a| a.t_index).collect::<Vec<_>>(), vec![1, 2]);
    }
}

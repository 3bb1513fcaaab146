use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use serde::Serialize;

use crate::model::{date_at, IncrementSeries, SeriesKey};

pub const WEEKDAYS: [&str; 7] = [
    "Sunday",
    "Monday",
    "Tuesday",
    "Wednesday",
    "Thursday",
    "Friday",
    "Saturday",
];

/// Offset of the first Sunday at or after `start`.
pub fn first_sunday_offset(start: NaiveDate) -> usize {
    (7 - start.weekday().num_days_from_sunday() as usize) % 7
}

/// Index of the first maximum (0 = first day of the slice).
pub fn argmax_earliest(week: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in week.iter().enumerate() {
        if v > week[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeekMax {
    pub week_start: NaiveDate,
    /// 0 = Sunday.
    pub weekday: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeeklyMaxProfile {
    pub key: SeriesKey,
    pub weeks: Vec<WeekMax>,
    /// How often each weekday held the weekly maximum.
    pub counts: [usize; 7],
    pub partial_weeks_skipped: usize,
}

impl WeeklyMaxProfile {
    /// Weekday with the highest count, earliest on ties.
    pub fn modal_weekday(&self) -> Option<usize> {
        if self.weeks.is_empty() {
            return None;
        }
        let c: Vec<f64> = self.counts.iter().map(|&c| c as f64).collect();
        Some(argmax_earliest(&c))
    }

    /// Restricts to weeks starting on or after `from` and before `until`.
    pub fn between(&self, from: NaiveDate, until: NaiveDate) -> WeeklyMaxProfile {
        let weeks: Vec<WeekMax> = self
            .weeks
            .iter()
            .filter(|w| w.week_start >= from && w.week_start < until)
            .cloned()
            .collect();
        let mut counts = [0; 7];
        for w in &weeks {
            counts[w.weekday] += 1;
        }
        WeeklyMaxProfile {
            key: self.key.clone(),
            weeks,
            counts,
            partial_weeks_skipped: self.partial_weeks_skipped,
        }
    }
}

/// Weekday of each complete Sunday–Saturday week's maximum.
pub fn weekly_max_profile(z: &IncrementSeries) -> WeeklyMaxProfile {
    let lead = first_sunday_offset(z.start_date).min(z.len());
    let body = &z.values[lead..];
    let full = body.len() / 7;
    let trailing = body.len() % 7;
    let mut counts = [0; 7];
    let weeks = body
        .chunks_exact(7)
        .enumerate()
        .map(|(w, week)| {
            let weekday = argmax_earliest(week);
            counts[weekday] += 1;
            WeekMax {
                week_start: date_at(z.start_date, lead + 7 * w),
                weekday,
            }
        })
        .collect::<Vec<_>>();
    debug_assert_eq!(weeks.len(), full);
    WeeklyMaxProfile {
        key: z.key.clone(),
        weeks,
        counts,
        partial_weeks_skipped: usize::from(lead > 0) + usize::from(trailing > 0),
    }
}

/// Per calendar week, how many series peaked on each weekday.
pub fn counts_by_week(profiles: &[WeeklyMaxProfile]) -> BTreeMap<NaiveDate, [usize; 7]> {
    let mut out: BTreeMap<NaiveDate, [usize; 7]> = BTreeMap::new();
    for p in profiles {
        for w in &p.weeks {
            out.entry(w.week_start).or_default()[w.weekday] += 1;
        }
    }
    out
}

//! Weekly-cycle detection: four tests, a majority-vote ensemble, weekly
//! maximum profiles and cycle-removal transforms.

mod cycle;
mod profile;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cycle::{remove_weekly_cycle, CycleMethod, CycleRemoval};
pub use profile::{
    argmax_earliest, counts_by_week, first_sunday_offset, weekly_max_profile, WeekMax,
    WeeklyMaxProfile, WEEKDAYS,
};
pub use tests::{
    acf, friedman, groups_by_phase, kruskal_wallis, qs, welch_anova, TestKind, TestResult,
};

use crate::model::{IncrementSeries, Metric, SeriesKey, SourceId};
use crate::numerics::NumericsError;

pub const PERIOD: usize = 7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeasonalityError {
    #[error("insufficient data for {test:?}: {detail}")]
    InsufficientData { test: TestKind, detail: String },
    #[error("only {ran} tests could run, need at least 3")]
    TooFewTests { ran: usize },
    #[error("series of length {len} is too short, need {needed}")]
    TooShort { len: usize, needed: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Friedman test on complete Sunday–Saturday weeks.
pub fn friedman_test(z: &IncrementSeries) -> Result<TestResult, SeasonalityError> {
    let lead = first_sunday_offset(z.start_date).min(z.len());
    friedman(&z.values[lead..], PERIOD)
}

/// Weekday groups, aligned so group 0 is Sunday.
fn weekday_groups(z: &IncrementSeries) -> Vec<Vec<f64>> {
    let mut groups = vec![Vec::new(); PERIOD];
    for (i, &v) in z.values.iter().enumerate() {
        groups[z.weekday_at(i)].push(v);
    }
    groups
}

pub fn kruskal_wallis_test(z: &IncrementSeries) -> Result<TestResult, SeasonalityError> {
    kruskal_wallis(&weekday_groups(z))
}

pub fn welch_anova_test(z: &IncrementSeries) -> Result<TestResult, SeasonalityError> {
    welch_anova(&weekday_groups(z))
}

pub fn qs_test(z: &IncrementSeries) -> Result<TestResult, SeasonalityError> {
    qs(&z.values, PERIOD)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTest {
    pub test: TestKind,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalityReport {
    pub key: SeriesKey,
    pub metric: Metric,
    pub source: SourceId,
    pub results: Vec<TestResult>,
    pub skipped: Vec<SkippedTest>,
    pub ensemble_verdict: bool,
    pub alpha: f64,
    pub n_weeks_used: usize,
}

impl SeasonalityReport {
    pub fn result(&self, test: TestKind) -> Option<&TestResult> {
        self.results.iter().find(|r| r.test == test)
    }
}

/// Majority vote: strictly more than half of the tests that ran.
pub fn majority_vote(p_values: &[f64], alpha: f64) -> bool {
    let sig = p_values.iter().filter(|&&p| p < alpha).count();
    2 * sig > p_values.len()
}

/// Runs all four tests and combines the ones that could run by majority
/// vote (ties are not significant).
pub fn ensemble_seasonal(z: &IncrementSeries, alpha: f64) -> Result<SeasonalityReport, SeasonalityError> {
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for test in TestKind::ALL {
        let r = match test {
            TestKind::QS => qs_test(z),
            TestKind::Friedman => friedman_test(z),
            TestKind::KruskalWallis => kruskal_wallis_test(z),
            TestKind::Welch => welch_anova_test(z),
        };
        match r {
            Ok(r) => results.push(r),
            Err(e @ SeasonalityError::InsufficientData { .. }) => skipped.push(SkippedTest {
                test,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    if results.len() < 3 {
        return Err(SeasonalityError::TooFewTests { ran: results.len() });
    }
    let p: Vec<f64> = results.iter().map(|r| r.p_value).collect();
    let lead = first_sunday_offset(z.start_date).min(z.len());
    Ok(SeasonalityReport {
        key: z.key.clone(),
        metric: z.metric,
        source: z.source,
        ensemble_verdict: majority_vote(&p, alpha),
        results,
        skipped,
        alpha,
        n_weeks_used: (z.len() - lead) / PERIOD,
    })
}

/// One row per report; per test the statistic, p-value and significance
/// flag (empty when the test did not run), then the ensemble verdict.
pub fn reports_to_csv(reports: &[SeasonalityReport]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header: Vec<String> = ["level", "fips", "county", "state", "metric", "source", "n_weeks"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for t in TestKind::ALL {
        for suffix in ["stat", "p", "sig"] {
            header.push(format!("{}_{}", t.as_str(), suffix));
        }
    }
    header.push("ensemble".into());
    w.write_record(&header)?;
    for r in reports {
        let mut rec = vec![
            r.key.level.to_string(),
            r.key.fips.clone().unwrap_or_default(),
            r.key.county_name.clone().unwrap_or_default(),
            r.key.state_name.clone().unwrap_or_default(),
            r.metric.to_string(),
            r.source.to_string(),
            r.n_weeks_used.to_string(),
        ];
        for t in TestKind::ALL {
            match r.result(t) {
                Some(x) => {
                    rec.push(x.statistic.to_string());
                    rec.push(x.p_value.to_string());
                    rec.push(x.significant(r.alpha).to_string());
                }
                None => rec.extend(["", "", ""].map(String::from)),
            }
        }
        rec.push(r.ensemble_verdict.to_string());
        w.write_record(&rec)?;
    }
    Ok(w.into_inner().expect("in-memory writer"))
}

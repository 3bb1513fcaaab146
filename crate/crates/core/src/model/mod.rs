//! Canonical domain types shared by every stage of the curation flow.

mod states;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use chrono::{Datelike, Days, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use states::{state_by_abbrev, state_by_fips, state_by_name, StateInfo, STATES};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid fips code `{0}`")]
    InvalidFips(String),
    #[error("fips `{fips}` does not belong to state `{state}`")]
    FipsStateMismatch { fips: String, state: String },
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("series must contain at least one value")]
    EmptySeries,
    #[error("negative or non-finite value {value} at offset {index}")]
    InvalidValue { index: usize, value: f64 },
    #[error("series `{key}` has length {got}, panel expects {expected}")]
    LengthMismatch {
        key: String,
        expected: usize,
        got: usize,
    },
    #[error("series `{0}` does not match the panel's source, metric or start date")]
    ForeignSeries(String),
    #[error("unknown {kind} `{value}`")]
    Parse { kind: &'static str, value: String },
}

/// Geographic resolution of a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    National,
    State,
    County,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::National => "national",
            Level::State => "state",
            Level::County => "county",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "national" | "us" => Ok(Level::National),
            "state" => Ok(Level::State),
            "county" => Ok(Level::County),
            _ => Err(ModelError::Parse {
                kind: "level",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SourceId {
    NYT,
    Atlantic,
    JHU,
    USAFacts,
}

impl SourceId {
    pub const ALL: [SourceId; 4] = [
        SourceId::NYT,
        SourceId::Atlantic,
        SourceId::JHU,
        SourceId::USAFacts,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceId::NYT => "NYT",
            SourceId::Atlantic => "Atlantic",
            SourceId::JHU => "JHU",
            SourceId::USAFacts => "USAFacts",
        }
    }

    /// The Atlantic only publishes state-level data.
    pub fn supports_level(self, level: Level) -> bool {
        !(self == SourceId::Atlantic && level == Level::County)
    }

    pub fn supports_metric(self, metric: Metric) -> bool {
        match metric {
            Metric::Recovered => matches!(self, SourceId::Atlantic | SourceId::JHU),
            _ => true,
        }
    }
}

impl fmt::Display for SourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceId {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nyt" => Ok(SourceId::NYT),
            "atlantic" => Ok(SourceId::Atlantic),
            "jhu" => Ok(SourceId::JHU),
            "usafacts" => Ok(SourceId::USAFacts),
            _ => Err(ModelError::Parse {
                kind: "source",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Infection,
    Death,
    Recovered,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Infection => "infection",
            Metric::Death => "death",
            Metric::Recovered => "recovered",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "infection" | "cases" | "confirmed" => Ok(Metric::Infection),
            "death" | "deaths" => Ok(Metric::Death),
            "recovered" => Ok(Metric::Recovered),
            _ => Err(ModelError::Parse {
                kind: "metric",
                value: s.to_string(),
            }),
        }
    }
}

/// Identifies one location.
///
/// Identity (equality, ordering, hashing) is `(level, fips)` for counties and
/// `(level, state_name)` otherwise; `county_name` is display data only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesKey {
    pub level: Level,
    pub fips: Option<String>,
    pub county_name: Option<String>,
    pub state_name: Option<String>,
}

/// County code used for a state's unallocated/unassigned counts.
pub const UNALLOCATED_COUNTY: &str = "999";
/// County code used for "Out of <state>" rows.
pub const OUT_OF_STATE_COUNTY: &str = "888";
pub const NATIONAL_NAME: &str = "US";

impl SeriesKey {
    pub fn national() -> Self {
        SeriesKey {
            level: Level::National,
            fips: None,
            county_name: None,
            state_name: None,
        }
    }

    pub fn state(name: impl Into<String>) -> Self {
        SeriesKey {
            level: Level::State,
            fips: None,
            county_name: None,
            state_name: Some(name.into()),
        }
    }

    /// Builds a county key, validating the code against the state.
    pub fn county(
        fips: &str,
        county_name: impl Into<String>,
        state_name: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let fips = normalize_fips(fips)?;
        let state_name = state_name.into();
        let state = state_by_fips(&fips[..2])
            .ok_or_else(|| ModelError::InvalidFips(fips.clone()))?;
        if state.name != state_name {
            return Err(ModelError::FipsStateMismatch {
                fips,
                state: state_name,
            });
        }
        Ok(SeriesKey {
            level: Level::County,
            fips: Some(fips),
            county_name: Some(county_name.into()),
            state_name: Some(state_name),
        })
    }

    /// County key whose state is derived from the code.
    pub fn county_from_fips(fips: &str, county_name: impl Into<String>) -> Result<Self, ModelError> {
        let fips = normalize_fips(fips)?;
        let state = state_by_fips(&fips[..2])
            .ok_or_else(|| ModelError::InvalidFips(fips.clone()))?;
        Self::county(&fips, county_name, state.name)
    }

    pub fn unallocated(state: &StateInfo) -> Self {
        SeriesKey {
            level: Level::County,
            fips: Some(format!("{}{}", state.fips, UNALLOCATED_COUNTY)),
            county_name: Some("Unallocated".to_string()),
            state_name: Some(state.name.to_string()),
        }
    }

    pub fn is_unallocated(&self) -> bool {
        self.fips
            .as_deref()
            .is_some_and(|f| f.ends_with(UNALLOCATED_COUNTY))
    }

    fn identity(&self) -> (Level, &str) {
        let id = match self.level {
            Level::County => self.fips.as_deref().unwrap_or(""),
            Level::State => self.state_name.as_deref().unwrap_or(""),
            Level::National => "",
        };
        (self.level, id)
    }

    /// Stable textual form used in URLs and reports: the fips code for
    /// counties, the state name for states and `US` for the nation.
    pub fn label(&self) -> String {
        match self.level {
            Level::County => self.fips.clone().unwrap_or_default(),
            Level::State => self.state_name.clone().unwrap_or_default(),
            Level::National => NATIONAL_NAME.to_string(),
        }
    }

    /// Checks the key's field invariants.
    pub fn validate(&self) -> Result<(), ModelError> {
        match self.level {
            Level::County => {
                let fips = self
                    .fips
                    .as_deref()
                    .ok_or_else(|| ModelError::InvalidFips(String::new()))?;
                let state = self.state_name.as_deref().unwrap_or("");
                let info =
                    state_by_fips(&fips[..2.min(fips.len())]).ok_or_else(|| ModelError::InvalidFips(fips.into()))?;
                if info.name != state {
                    return Err(ModelError::FipsStateMismatch {
                        fips: fips.into(),
                        state: state.into(),
                    });
                }
                Ok(())
            }
            Level::State => {
                if self.fips.is_some() {
                    return Err(ModelError::InvalidFips(self.fips.clone().unwrap()));
                }
                match self.state_name.as_deref() {
                    Some(s) if state_by_name(s).is_some() => Ok(()),
                    other => Err(ModelError::UnknownState(other.unwrap_or("").into())),
                }
            }
            Level::National => {
                if self.fips.is_some() || self.state_name.is_some() {
                    Err(ModelError::InvalidFips(self.label()))
                } else {
                    Ok(())
                }
            }
        }
    }
}

impl PartialEq for SeriesKey {
    fn eq(&self, other: &Self) -> bool {
        self.identity() == other.identity()
    }
}

impl Eq for SeriesKey {}

impl Hash for SeriesKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.identity().hash(state);
    }
}

impl PartialOrd for SeriesKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SeriesKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.identity().cmp(&other.identity())
    }
}

impl fmt::Display for SeriesKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.level {
            Level::County => write!(
                f,
                "{} ({}, {})",
                self.fips.as_deref().unwrap_or("?"),
                self.county_name.as_deref().unwrap_or("?"),
                self.state_name.as_deref().unwrap_or("?")
            ),
            Level::State => f.write_str(self.state_name.as_deref().unwrap_or("?")),
            Level::National => f.write_str(NATIONAL_NAME),
        }
    }
}

/// Zero-pads a numeric county code to five digits.
pub fn normalize_fips(raw: &str) -> Result<String, ModelError> {
    let trimmed = raw.trim();
    let trimmed = trimmed.strip_suffix(".0").unwrap_or(trimmed);
    if trimmed.is_empty() || trimmed.len() > 5 || !trimmed.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ModelError::InvalidFips(raw.to_string()));
    }
    Ok(format!("{trimmed:0>5}"))
}

/// Cumulative counts for one location, metric and source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeSeries {
    pub key: SeriesKey,
    pub metric: Metric,
    pub source: SourceId,
    pub start_date: NaiveDate,
    values: Vec<f64>,
}

impl CumulativeSeries {
    pub fn new(
        key: SeriesKey,
        metric: Metric,
        source: SourceId,
        start_date: NaiveDate,
        values: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if values.is_empty() {
            return Err(ModelError::EmptySeries);
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(ModelError::InvalidValue { index, value });
        }
        Ok(CumulativeSeries {
            key,
            metric,
            source,
            start_date,
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("non-empty by construction")
    }

    pub fn date_at(&self, offset: usize) -> NaiveDate {
        date_at(self.start_date, offset)
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, ModelError> {
        Self::new(
            self.key.clone(),
            self.metric,
            self.source,
            self.start_date,
            values,
        )
    }

    pub fn to_increments(&self) -> IncrementSeries {
        to_increments(self)
    }
}

/// Daily increments `Z_t = Y_t - Y_{t-1}` with `Z_1 = Y_1`; may be negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementSeries {
    pub key: SeriesKey,
    pub metric: Metric,
    pub source: SourceId,
    pub start_date: NaiveDate,
    pub values: Vec<f64>,
}

impl IncrementSeries {
    /// Unkeyed series, mostly for analysis of bare vectors.
    pub fn from_values(start_date: NaiveDate, values: Vec<f64>) -> Self {
        IncrementSeries {
            key: SeriesKey::national(),
            metric: Metric::Infection,
            source: SourceId::NYT,
            start_date,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn date_at(&self, offset: usize) -> NaiveDate {
        date_at(self.start_date, offset)
    }

    /// Day of week for each offset, 0 = Sunday.
    pub fn weekday_at(&self, offset: usize) -> usize {
        self.date_at(offset).weekday().num_days_from_sunday() as usize
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        IncrementSeries {
            values,
            ..self.clone()
        }
    }
}

pub fn date_at(start: NaiveDate, offset: usize) -> NaiveDate {
    start
        .checked_add_days(Days::new(offset as u64))
        .expect("date overflow")
}

pub fn to_increments(series: &CumulativeSeries) -> IncrementSeries {
    let v = series.values();
    let mut out = Vec::with_capacity(v.len());
    out.push(v[0]);
    out.extend(v.windows(2).map(|w| w[1] - w[0]));
    IncrementSeries {
        key: series.key.clone(),
        metric: series.metric,
        source: series.source,
        start_date: series.start_date,
        values: out,
    }
}

/// Running sums. Fails if a partial sum is negative, since cumulative
/// counts cannot be.
pub fn to_cumulative(series: &IncrementSeries) -> Result<CumulativeSeries, ModelError> {
    let values = running_sum(&series.values);
    CumulativeSeries::new(
        series.key.clone(),
        series.metric,
        series.source,
        series.start_date,
        values,
    )
}

pub fn running_sum(values: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    values
        .iter()
        .map(|z| {
            acc += z;
            acc
        })
        .collect()
}

pub fn differences(values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    if let Some(&first) = values.first() {
        out.push(first);
    }
    out.extend(values.windows(2).map(|w| w[1] - w[0]));
    out
}

/// All series of one source and metric at one level, sharing a start date
/// and length.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub source: SourceId,
    pub metric: Metric,
    pub level: Level,
    pub start_date: NaiveDate,
    len: usize,
    series: BTreeMap<SeriesKey, CumulativeSeries>,
}

impl Panel {
    pub fn new(source: SourceId, metric: Metric, level: Level, start_date: NaiveDate, len: usize) -> Self {
        Panel {
            source,
            metric,
            level,
            start_date,
            len,
            series: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, series: CumulativeSeries) -> Result<(), ModelError> {
        if series.len() != self.len {
            return Err(ModelError::LengthMismatch {
                key: series.key.to_string(),
                expected: self.len,
                got: series.len(),
            });
        }
        if series.source != self.source
            || series.metric != self.metric
            || series.start_date != self.start_date
            || series.key.level != self.level
        {
            return Err(ModelError::ForeignSeries(series.key.to_string()));
        }
        self.series.insert(series.key.clone(), series);
        Ok(())
    }

    pub fn insert_values(&mut self, key: SeriesKey, values: Vec<f64>) -> Result<(), ModelError> {
        let s = CumulativeSeries::new(key, self.metric, self.source, self.start_date, values)?;
        self.insert(s)
    }

    pub fn remove(&mut self, key: &SeriesKey) -> Option<CumulativeSeries> {
        self.series.remove(key)
    }

    pub fn get(&self, key: &SeriesKey) -> Option<&CumulativeSeries> {
        self.series.get(key)
    }

    pub fn get_by_label(&self, label: &str) -> Option<&CumulativeSeries> {
        self.series.values().find(|s| s.key.label() == label)
    }

    pub fn series(&self) -> impl Iterator<Item = &CumulativeSeries> {
        self.series.values()
    }

    pub fn keys(&self) -> impl Iterator<Item = &SeriesKey> {
        self.series.keys()
    }

    pub fn num_days(&self) -> usize {
        self.len
    }

    pub fn num_series(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        (0..self.len).map(|i| date_at(self.start_date, i)).collect()
    }

    /// Sum of final cumulative values over all series.
    pub fn total(&self) -> f64 {
        self.series.values().map(|s| s.last()).sum()
    }

    /// Elementwise sum over all series.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for s in self.series.values() {
            for (o, v) in out.iter_mut().zip(s.values()) {
                *o += v;
            }
        }
        out
    }

    /// Sums counties into states, or states into the nation.
    pub fn aggregate(&self, level: Level) -> Result<Panel, ModelError> {
        if level == self.level {
            return Ok(self.clone());
        }
        let mut sums: BTreeMap<SeriesKey, Vec<f64>> = BTreeMap::new();
        for s in self.series.values() {
            let key = match level {
                Level::National => SeriesKey::national(),
                Level::State if self.level == Level::County => {
                    SeriesKey::state(s.key.state_name.clone().unwrap_or_default())
                }
                _ => {
                    return Err(ModelError::Parse {
                        kind: "aggregation target",
                        value: level.to_string(),
                    })
                }
            };
            let acc = sums.entry(key).or_insert_with(|| vec![0.0; self.len]);
            for (a, v) in acc.iter_mut().zip(s.values()) {
                *a += v;
            }
        }
        let mut out = Panel::new(self.source, self.metric, level, self.start_date, self.len);
        for (k, v) in sums {
            out.insert_values(k, v)?;
        }
        Ok(out)
    }

    /// Restricts every series to the inclusive date range.
    pub fn window(&self, start: NaiveDate, end: NaiveDate) -> Result<Panel, ModelError> {
        let first = (start - self.start_date).num_days().max(0) as usize;
        let last = ((end - self.start_date).num_days().max(-1) + 1).min(self.len as i64) as usize;
        if first >= last {
            return Err(ModelError::EmptySeries);
        }
        let mut out = Panel::new(
            self.source,
            self.metric,
            self.level,
            date_at(self.start_date, first),
            last - first,
        );
        for s in self.series.values() {
            out.insert_values(s.key.clone(), s.values()[first..last].to_vec())?;
        }
        Ok(out)
    }
}

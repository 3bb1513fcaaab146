//! Parsers for the four upstream CSV dialects.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::Serialize;

use super::fetch::RawSnapshot;
use super::IngestError;
use crate::model::{
    date_at, state_by_abbrev, state_by_fips, state_by_name, Level, Metric, Panel, SeriesKey,
    SourceId, OUT_OF_STATE_COUNTY,
};

/// Earliest date any source publishes; panels never start later than this.
pub fn canonical_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 22).expect("valid date")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowError {
    /// 1-based line number in the payload, header included.
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParseReport {
    pub rows_read: usize,
    pub row_errors: Vec<RowError>,
    /// Repeated (location, date) observations; the larger value is kept.
    pub duplicates: usize,
}

#[derive(Debug, Clone)]
pub struct ParsedPanel {
    pub panel: Panel,
    pub report: ParseReport,
}

/// Parses a snapshot with the default alias table.
pub fn parse_source(snapshot: &RawSnapshot, metric: Metric) -> Result<ParsedPanel, IngestError> {
    parse_source_with(snapshot, metric, &super::geo::GeoRuleSet::default().aliases)
}

/// Parses a snapshot; `aliases` maps `"County, State"` names to fips codes for
/// rows the source publishes without one.
pub fn parse_source_with(
    snapshot: &RawSnapshot,
    metric: Metric,
    aliases: &BTreeMap<String, String>,
) -> Result<ParsedPanel, IngestError> {
    let source = snapshot.source;
    if !source.supports_metric(metric) {
        return Err(IngestError::UnsupportedMetric { source_id: source, metric });
    }
    let mut acc = Accumulator::default();
    let level = match source {
        SourceId::NYT => parse_nyt(&snapshot.payload, metric, aliases, &mut acc)?,
        SourceId::JHU => {
            parse_jhu(&snapshot.payload, aliases, &mut acc)?;
            Level::County
        }
        SourceId::USAFacts => {
            parse_usafacts(&snapshot.payload, &mut acc)?;
            Level::County
        }
        SourceId::Atlantic => {
            parse_atlantic(&snapshot.payload, metric, &mut acc)?;
            Level::State
        }
    };
    acc.finish(source, metric, level)
}

/// Observations keyed by series, then by the raw upstream location (several
/// raw locations may feed one series), then by date.
#[derive(Default)]
struct Accumulator {
    cells: BTreeMap<SeriesKey, BTreeMap<String, BTreeMap<NaiveDate, f64>>>,
    names: BTreeMap<SeriesKey, BTreeSet<String>>,
    report: ParseReport,
}

impl Accumulator {
    fn add(&mut self, key: &SeriesKey, raw_id: &str, date: NaiveDate, value: f64) {
        if let Some(name) = &key.county_name {
            self.names.entry(key.clone()).or_default().insert(name.clone());
        }
        let by_date = self
            .cells
            .entry(key.clone())
            .or_default()
            .entry(raw_id.to_string())
            .or_default();
        match by_date.get_mut(&date) {
            Some(v) => {
                self.report.duplicates += 1;
                *v = v.max(value);
            }
            None => {
                by_date.insert(date, value);
            }
        }
    }

    fn row_error(&mut self, line: u64, message: impl Into<String>) {
        self.report.row_errors.push(RowError {
            line,
            message: message.into(),
        });
    }

    fn finish(self, source: SourceId, metric: Metric, level: Level) -> Result<ParsedPanel, IngestError> {
        let dates = self
            .cells
            .values()
            .flat_map(|raw| raw.values())
            .flat_map(|m| m.keys().copied());
        let (mut first, mut last) = (None::<NaiveDate>, None::<NaiveDate>);
        for d in dates {
            first = Some(first.map_or(d, |f| f.min(d)));
            last = Some(last.map_or(d, |l| l.max(d)));
        }
        let (Some(first), Some(last)) = (first, last) else {
            return Err(IngestError::Empty);
        };
        let start = first.min(canonical_start());
        let len = (last - start).num_days() as usize + 1;
        let mut panel = Panel::new(source, metric, level, start, len);
        for (key, raw) in self.cells {
            let mut sum = vec![0.0; len];
            for by_date in raw.values() {
                let first_obs = *by_date.keys().next().expect("non-empty");
                let lead = (first_obs - start).num_days() as usize;
                for (offset, slot) in sum.iter_mut().enumerate().skip(lead) {
                    let date = date_at(start, offset);
                    match by_date.get(&date) {
                        Some(v) => *slot += v,
                        None => {
                            return Err(IngestError::Gap {
                                key: key.to_string(),
                                date,
                            })
                        }
                    }
                }
            }
            let mut key = key;
            if let Some(name) = self.names.get(&key).and_then(|n| n.iter().next()) {
                key.county_name = Some(name.clone());
            }
            panel.insert_values(key, sum)?;
        }
        Ok(ParsedPanel {
            panel,
            report: self.report,
        })
    }
}

/// Parses a nonnegative integral count; empty cells are missing.
fn parse_count(raw: &str) -> Result<Option<f64>, String> {
    let s = raw.trim();
    if s.is_empty() {
        return Ok(None);
    }
    let v: f64 = s.parse().map_err(|_| format!("invalid count `{raw}`"))?;
    if !v.is_finite() || v < 0.0 || v.fract() != 0.0 {
        return Err(format!("count `{raw}` is not a nonnegative integer"));
    }
    Ok(Some(v))
}

fn parse_date(raw: &str, formats: &[&str]) -> Option<NaiveDate> {
    let s = raw.trim();
    formats
        .iter()
        .find_map(|f| NaiveDate::parse_from_str(s, f).ok())
}

fn reader(payload: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().flexible(false).from_reader(payload)
}

fn headers(rdr: &mut csv::Reader<&[u8]>) -> Result<Vec<String>, IngestError> {
    Ok(rdr
        .headers()?
        .iter()
        .map(|h| h.trim().trim_start_matches('\u{feff}').to_string())
        .collect())
}

fn require(headers: &[String], name: &str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn unallocated_for(state_name: &str) -> Result<SeriesKey, String> {
    state_by_name(state_name)
        .map(SeriesKey::unallocated)
        .ok_or_else(|| format!("unknown state `{state_name}`"))
}

fn out_of_state(state_fips: &str) -> Result<SeriesKey, String> {
    let state = state_by_fips(state_fips).ok_or_else(|| format!("unknown state fips `{state_fips}`"))?;
    SeriesKey::county(
        &format!("{}{}", state.fips, OUT_OF_STATE_COUNTY),
        format!("Out of {}", state.name),
        state.name,
    )
    .map_err(|e| e.to_string())
}

fn alias_key(
    aliases: &BTreeMap<String, String>,
    county: &str,
    state: &str,
) -> Option<Result<SeriesKey, String>> {
    aliases
        .get(&format!("{county}, {state}"))
        .map(|fips| SeriesKey::county(fips, county, state).map_err(|e| e.to_string()))
}

const NYT_COLUMNS: [&str; 6] = ["date", "county", "state", "fips", "cases", "deaths"];

/// NYT publishes the same long layout at three levels. County files carry a
/// `county` column or bare county `fips`; state files carry `state` without
/// `county`; the national file has no location column at all.
fn parse_nyt(
    payload: &[u8],
    metric: Metric,
    aliases: &BTreeMap<String, String>,
    acc: &mut Accumulator,
) -> Result<Level, IngestError> {
    let mut rdr = reader(payload);
    let hs = headers(&mut rdr)?;
    if let Some(bad) = hs.iter().find(|h| !NYT_COLUMNS.contains(&h.as_str())) {
        return Err(IngestError::Schema(bad.clone()));
    }
    let date_i = require(&hs, "date")?;
    let value_i = require(&hs, if metric == Metric::Death { "deaths" } else { "cases" })?;
    let county_i = hs.iter().position(|h| h == "county");
    let state_i = hs.iter().position(|h| h == "state");
    let fips_only = hs.iter().any(|h| h == "fips") && state_i.is_none();
    if county_i.is_none() && !fips_only {
        let level = if state_i.is_some() { Level::State } else { Level::National };
        parse_nyt_aggregate(&mut rdr, date_i, value_i, state_i, acc)?;
        return Ok(level);
    }
    let fips_i = require(&hs, "fips")?;
    for record in rdr.records() {
        let record = record?;
        acc.report.rows_read += 1;
        let line = line_of(&record);
        let county = county_i.map_or("", |i| record[i].trim());
        let state = state_i.map_or("", |i| record[i].trim());
        let Some(date) = parse_date(&record[date_i], &["%Y-%m-%d"]) else {
            acc.row_error(line, format!("invalid date `{}`", &record[date_i]));
            continue;
        };
        let fips = record[fips_i].trim();
        let key = if fips.is_empty() {
            if county == "Unknown" {
                unallocated_for(state)
            } else {
                alias_key(aliases, county, state)
                    .unwrap_or_else(|| Err(format!("missing fips for `{county}, {state}`")))
            }
        } else {
            SeriesKey::county_from_fips(fips, county).map_err(|e| e.to_string()).and_then(|k| {
                if state.is_empty() || k.state_name.as_deref() == Some(state) {
                    Ok(k)
                } else {
                    Err(format!("fips `{fips}` does not belong to `{state}`"))
                }
            })
        };
        let key = match key {
            Ok(k) => k,
            Err(m) => {
                acc.row_error(line, m);
                continue;
            }
        };
        match parse_count(&record[value_i]) {
            Ok(Some(v)) => acc.add(&key, &format!("{fips}|{county}|{state}"), date, v),
            Ok(None) => {}
            Err(m) => acc.row_error(line, m),
        }
    }
    Ok(Level::County)
}

fn parse_nyt_aggregate(
    rdr: &mut csv::Reader<&[u8]>,
    date_i: usize,
    value_i: usize,
    state_i: Option<usize>,
    acc: &mut Accumulator,
) -> Result<(), IngestError> {
    for record in rdr.records() {
        let record = record?;
        acc.report.rows_read += 1;
        let line = line_of(&record);
        let Some(date) = parse_date(&record[date_i], &["%Y-%m-%d"]) else {
            acc.row_error(line, format!("invalid date `{}`", &record[date_i]));
            continue;
        };
        let key = match state_i {
            None => SeriesKey::national(),
            Some(i) => match state_by_name(record[i].trim()) {
                Some(s) => SeriesKey::state(s.name),
                None => {
                    acc.row_error(line, format!("unknown state `{}`", record[i].trim()));
                    continue;
                }
            },
        };
        let raw_id = key.label();
        match parse_count(&record[value_i]) {
            Ok(Some(v)) => acc.add(&key, &raw_id, date, v),
            Ok(None) => {}
            Err(m) => acc.row_error(line, m),
        }
    }
    Ok(())
}

/// Splits a wide header into metadata columns and date columns; any column
/// that is neither known metadata nor a date is a schema error.
fn wide_layout(
    hs: &[String],
    known: &[&str],
    date_formats: &[&str],
) -> Result<Vec<(usize, NaiveDate)>, IngestError> {
    let mut dates = Vec::new();
    for (i, h) in hs.iter().enumerate() {
        if known.contains(&h.as_str()) {
            continue;
        }
        match parse_date(h, date_formats) {
            Some(d) => dates.push((i, d)),
            None => return Err(IngestError::Schema(h.clone())),
        }
    }
    Ok(dates)
}

/// Reads every date cell of a wide row; any bad cell rejects the row.
fn wide_values(record: &csv::StringRecord, dates: &[(usize, NaiveDate)]) -> Result<Vec<(NaiveDate, f64)>, String> {
    let mut out = Vec::with_capacity(dates.len());
    for &(i, d) in dates {
        if let Some(v) = parse_count(&record[i]).map_err(|m| format!("{d}: {m}"))? {
            out.push((d, v));
        }
    }
    Ok(out)
}

const JHU_COLUMNS: [&str; 12] = [
    "UID",
    "iso2",
    "iso3",
    "code3",
    "FIPS",
    "Admin2",
    "Province_State",
    "Country_Region",
    "Lat",
    "Long_",
    "Combined_Key",
    "Population",
];

fn jhu_key(fips: &str, admin2: &str, province: &str, aliases: &BTreeMap<String, String>) -> Result<SeriesKey, String> {
    let fips = fips.trim();
    if fips.is_empty() {
        if admin2 == "Unassigned" {
            return unallocated_for(province);
        }
        if admin2.starts_with("Out of") {
            let state = state_by_name(province).ok_or_else(|| format!("unknown state `{province}`"))?;
            return out_of_state(state.fips);
        }
        return alias_key(aliases, admin2, province)
            .unwrap_or_else(|| Err(format!("missing fips for `{admin2}, {province}`")));
    }
    let code: u32 = fips
        .strip_suffix(".0")
        .unwrap_or(fips)
        .parse()
        .map_err(|_| format!("invalid fips `{fips}`"))?;
    match code {
        // Whole-territory rows carry the bare state code.
        1..=99 => {
            let state = state_by_fips(&format!("{code:02}")).ok_or_else(|| format!("invalid fips `{fips}`"))?;
            SeriesKey::county(&format!("{}000", state.fips), state.name, state.name).map_err(|e| e.to_string())
        }
        80001..=80099 => out_of_state(&format!("{:02}", code % 100)),
        90001..=90099 => {
            let state = state_by_fips(&format!("{:02}", code % 100)).ok_or_else(|| format!("invalid fips `{fips}`"))?;
            Ok(SeriesKey::unallocated(state))
        }
        _ => {
            let key = SeriesKey::county_from_fips(&code.to_string(), admin2).map_err(|e| e.to_string())?;
            if !province.is_empty() && key.state_name.as_deref() != Some(province) {
                return Err(format!("fips `{fips}` does not belong to `{province}`"));
            }
            if admin2.starts_with("Out of") {
                return out_of_state(&key.fips.as_deref().unwrap_or("")[..2]);
            }
            Ok(key)
        }
    }
}

fn parse_jhu(payload: &[u8], aliases: &BTreeMap<String, String>, acc: &mut Accumulator) -> Result<(), IngestError> {
    let mut rdr = reader(payload);
    let hs = headers(&mut rdr)?;
    let dates = wide_layout(&hs, &JHU_COLUMNS, &["%m/%d/%y"])?;
    let fips_i = require(&hs, "FIPS")?;
    let admin_i = require(&hs, "Admin2")?;
    let prov_i = require(&hs, "Province_State")?;
    let uid_i = hs.iter().position(|h| h == "UID");
    for record in rdr.records() {
        let record = record?;
        acc.report.rows_read += 1;
        let line = line_of(&record);
        let admin2 = record[admin_i].trim();
        let province = record[prov_i].trim();
        let key = match jhu_key(&record[fips_i], admin2, province, aliases) {
            Ok(k) => k,
            Err(m) => {
                acc.row_error(line, m);
                continue;
            }
        };
        let raw_id = match uid_i {
            Some(i) => record[i].trim().to_string(),
            None => format!("{}|{admin2}|{province}", record[fips_i].trim()),
        };
        match wide_values(&record, &dates) {
            Ok(values) => {
                for (d, v) in values {
                    acc.add(&key, &raw_id, d, v);
                }
            }
            Err(m) => acc.row_error(line, m),
        }
    }
    Ok(())
}

const USAFACTS_COLUMNS: [&str; 5] = ["countyFIPS", "County Name", "State", "StateFIPS", "stateFIPS"];

fn usafacts_key(fips: &str, name: &str, state_abbrev: &str) -> Result<SeriesKey, String> {
    let code: u32 = fips
        .trim()
        .strip_suffix(".0")
        .unwrap_or(fips.trim())
        .parse()
        .map_err(|_| format!("invalid countyFIPS `{fips}`"))?;
    if code < 1000 {
        // Statewide unallocated and similar pseudo rows.
        let state = state_by_abbrev(state_abbrev).ok_or_else(|| format!("unknown state `{state_abbrev}`"))?;
        return Ok(SeriesKey::unallocated(state));
    }
    let key = SeriesKey::county_from_fips(&code.to_string(), name).map_err(|e| e.to_string())?;
    let expected = state_by_abbrev(state_abbrev).map(|s| s.name);
    if expected.is_some() && key.state_name.as_deref() != expected {
        return Err(format!("countyFIPS `{fips}` does not belong to `{state_abbrev}`"));
    }
    Ok(key)
}

fn parse_usafacts(payload: &[u8], acc: &mut Accumulator) -> Result<(), IngestError> {
    let mut rdr = reader(payload);
    let hs = headers(&mut rdr)?;
    let dates = wide_layout(&hs, &USAFACTS_COLUMNS, &["%Y-%m-%d", "%m/%d/%y", "%m/%d/%Y"])?;
    let fips_i = require(&hs, "countyFIPS")?;
    let name_i = require(&hs, "County Name")?;
    let state_i = require(&hs, "State")?;
    for record in rdr.records() {
        let record = record?;
        acc.report.rows_read += 1;
        let line = line_of(&record);
        let fips = record[fips_i].trim();
        let key = match usafacts_key(fips, record[name_i].trim(), record[state_i].trim()) {
            Ok(k) => k,
            Err(m) => {
                acc.row_error(line, m);
                continue;
            }
        };
        let raw_id = format!("{fips}|{}", record[state_i].trim());
        match wide_values(&record, &dates) {
            Ok(values) => {
                for (d, v) in values {
                    acc.add(&key, &raw_id, d, v);
                }
            }
            Err(m) => acc.row_error(line, m),
        }
    }
    Ok(())
}

fn parse_atlantic(payload: &[u8], metric: Metric, acc: &mut Accumulator) -> Result<(), IngestError> {
    let mut rdr = reader(payload);
    let hs = headers(&mut rdr)?;
    let date_i = require(&hs, "date")?;
    let state_i = require(&hs, "state")?;
    let value_i = require(
        &hs,
        match metric {
            Metric::Infection => "positive",
            Metric::Death => "death",
            Metric::Recovered => "recovered",
        },
    )?;
    for record in rdr.records() {
        let record = record?;
        acc.report.rows_read += 1;
        let line = line_of(&record);
        let Some(date) = parse_date(&record[date_i], &["%Y%m%d", "%Y-%m-%d"]) else {
            acc.row_error(line, format!("invalid date `{}`", &record[date_i]));
            continue;
        };
        let abbrev = record[state_i].trim();
        let Some(state) = state_by_abbrev(abbrev) else {
            acc.row_error(line, format!("unknown state `{abbrev}`"));
            continue;
        };
        match parse_count(&record[value_i]) {
            Ok(Some(v)) => acc.add(&SeriesKey::state(state.name), abbrev, date, v),
            Ok(None) => {}
            Err(m) => acc.row_error(line, m),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(source: SourceId, text: &str) -> RawSnapshot {
        RawSnapshot::new(source, "inline", text.as_bytes().to_vec())
    }

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn nyt_two_row_pivot() {
        let p = parse_source(
            &snap(SourceId::NYT, "date,fips,cases,deaths\n2020-01-22,53061,1,0\n2020-01-23,53061,1,0\n"),
            Metric::Infection,
        )
        .unwrap();
        assert_eq!(p.panel.num_series(), 1);
        assert_eq!(p.panel.start_date, d(2020, 1, 22));
        assert_eq!(p.panel.get_by_label("53061").unwrap().values(), &[1.0, 1.0]);
    }

    #[test]
    fn nyt_leading_days_zero_filled_and_unknown_routed() {
        let text = "date,county,state,fips,cases,deaths\n\
                    2020-01-24,Snohomish,Washington,53061,2,0\n\
                    2020-01-24,Unknown,Washington,,3,1\n";
        let p = parse_source(&snap(SourceId::NYT, text), Metric::Death).unwrap();
        assert_eq!(p.panel.num_days(), 3);
        assert_eq!(p.panel.get_by_label("53999").unwrap().values(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn nyt_unknown_header_names_column() {
        let e = parse_source(&snap(SourceId::NYT, "date,fips,cases,deaths,extra\n"), Metric::Infection).unwrap_err();
        assert_eq!(e.to_string(), "schema error: unknown column `extra`");
    }

    #[test]
    fn malformed_fips_is_row_error() {
        let text = "date,fips,cases,deaths\n2020-01-22,53061,1,0\n2020-01-22,ABCDE,4,0\n";
        let p = parse_source(&snap(SourceId::NYT, text), Metric::Infection).unwrap();
        assert_eq!(p.panel.num_series(), 1);
        assert_eq!(p.report.row_errors.len(), 1);
        assert_eq!(p.report.row_errors[0].line, 3);
    }

    #[test]
    fn interior_gap_is_error() {
        let text = "date,fips,cases,deaths\n2020-01-22,53061,1,0\n2020-01-24,53061,1,0\n";
        let e = parse_source(&snap(SourceId::NYT, text), Metric::Infection).unwrap_err();
        assert!(matches!(e, IngestError::Gap { .. }));
    }

    #[test]
    fn nyt_state_and_national_files() {
        let text = "date,state,fips,cases,deaths\n2020-01-22,Washington,53,1,0\n2020-01-23,Washington,53,2,0\n";
        let p = parse_source(&snap(SourceId::NYT, text), Metric::Infection).unwrap();
        assert_eq!(p.panel.level, Level::State);
        assert_eq!(p.panel.get_by_label("Washington").unwrap().values(), &[1.0, 2.0]);
        let text = "date,cases,deaths\n2020-01-22,1,0\n";
        let p = parse_source(&snap(SourceId::NYT, text), Metric::Infection).unwrap();
        assert_eq!(p.panel.level, Level::National);
        assert_eq!(p.panel.get_by_label("US").unwrap().values(), &[1.0]);
    }

    #[test]
    fn usafacts_zero_fips_goes_to_unallocated() {
        let text = "countyFIPS,County Name,State,StateFIPS,2020-01-22,2020-01-23\n\
                    0,Statewide Unallocated,AL,1,0,4\n\
                    1001,Autauga County,AL,1,1,2\n";
        let p = parse_source(&snap(SourceId::USAFacts, text), Metric::Infection).unwrap();
        let u = p.panel.get_by_label("01999").unwrap();
        assert!(u.key.is_unallocated());
        assert_eq!(u.values(), &[0.0, 4.0]);
    }

    #[test]
    fn jhu_pseudo_codes() {
        let text = "UID,FIPS,Admin2,Province_State,1/22/20\n\
                    1,90053.0,Unassigned,Washington,5\n\
                    2,80053.0,Out of WA,Washington,2\n\
                    3,53061.0,Snohomish,Washington,1\n\
                    4,,Unassigned,Washington,1\n";
        let p = parse_source(&snap(SourceId::JHU, text), Metric::Infection).unwrap();
        assert_eq!(p.panel.get_by_label("53999").unwrap().values(), &[6.0]);
        assert_eq!(p.panel.get_by_label("53888").unwrap().key.county_name.as_deref(), Some("Out of Washington"));
        assert_eq!(p.panel.num_series(), 3);
    }

    #[test]
    fn atlantic_long_with_extra_columns() {
        let text = "date,state,positive,death,hash,totalTestResults\n\
                    20200123,WA,1,,x,10\n20200122,WA,1,,y,5\n";
        let p = parse_source(&snap(SourceId::Atlantic, text), Metric::Infection).unwrap();
        assert_eq!(p.panel.level, Level::State);
        assert_eq!(p.panel.get_by_label("Washington").unwrap().values(), &[1.0, 1.0]);
    }

    #[test]
    fn non_integral_count_rejected() {
        let text = "date,fips,cases,deaths\n2020-01-22,53061,1.5,0\n";
        let e = parse_source(&snap(SourceId::NYT, text), Metric::Infection).unwrap_err();
        assert!(matches!(e, IngestError::Empty));
    }

    #[test]
    fn recovered_not_offered_by_nyt() {
        let e = parse_source(&snap(SourceId::NYT, "date,fips,cases,deaths\n"), Metric::Recovered).unwrap_err();
        assert!(matches!(e, IngestError::UnsupportedMetric { .. }));
    }
}

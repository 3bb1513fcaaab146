//! The canonical wide CSV layout: `ID,County,State,X2020.01.22,...` for
//! counties and `State,X2020.01.22,...` for states and the nation.

use std::path::Path;

use chrono::NaiveDate;

use super::IngestError;
use crate::model::{date_at, Level, Metric, Panel, SeriesKey, SourceId, NATIONAL_NAME};

const DATE_FORMAT: &str = "X%Y.%m.%d";

pub fn date_column(date: NaiveDate) -> String {
    date.format(DATE_FORMAT).to_string()
}

/// Integral values print without a fractional part; others use the shortest
/// representation that parses back to the same `f64`.
pub fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn writer<W: std::io::Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(w)
}

pub fn canonical_bytes(panel: &Panel) -> Result<Vec<u8>, IngestError> {
    if panel.is_empty() {
        return Err(IngestError::Canonical("cannot write an empty panel".into()));
    }
    let mut w = writer(Vec::new());
    let mut header: Vec<String> = match panel.level {
        Level::County => vec!["ID".into(), "County".into(), "State".into()],
        _ => vec!["State".into()],
    };
    header.extend(panel.dates().into_iter().map(date_column));
    w.write_record(&header)?;
    for s in panel.series() {
        let mut row: Vec<String> = match panel.level {
            Level::County => vec![
                s.key.fips.clone().unwrap_or_default(),
                s.key.county_name.clone().unwrap_or_default(),
                s.key.state_name.clone().unwrap_or_default(),
            ],
            _ => vec![s.key.label()],
        };
        row.extend(s.values().iter().map(|&v| format_value(v)));
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| IngestError::Canonical(e.to_string()))
}

pub fn write_canonical(panel: &Panel, path: &Path) -> Result<(), IngestError> {
    let bytes = canonical_bytes(panel)?;
    crate::pipeline::atomic_write(path, &bytes)?;
    Ok(())
}

/// Parses canonical bytes. The file carries no source or metric, so the
/// caller supplies them.
pub fn parse_canonical(bytes: &[u8], source: SourceId, metric: Metric) -> Result<Panel, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(bytes);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let county = header.first().map(String::as_str) == Some("ID");
    let fixed = if county { 3 } else { 1 };
    let expected_fixed: &[&str] = if county { &["ID", "County", "State"] } else { &["State"] };
    if header.len() <= fixed || header[..fixed] != *expected_fixed {
        return Err(IngestError::Schema(header.first().cloned().unwrap_or_default()));
    }
    let mut dates = Vec::with_capacity(header.len() - fixed);
    for h in &header[fixed..] {
        let d = NaiveDate::parse_from_str(h, DATE_FORMAT).map_err(|_| IngestError::Schema(h.clone()))?;
        dates.push(d);
    }
    let start = dates[0];
    for (i, (d, h)) in dates.iter().zip(&header[fixed..]).enumerate() {
        if *d != date_at(start, i) {
            return Err(IngestError::Canonical(format!("date column {h} breaks contiguity")));
        }
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let key = if county {
            SeriesKey::county(&record[0], &record[1], &record[2])?
        } else if &record[0] == NATIONAL_NAME {
            SeriesKey::national()
        } else {
            SeriesKey::state(&record[0])
        };
        let values = record
            .iter()
            .skip(fixed)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| IngestError::Canonical(format!("invalid value `{v}` for {key}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((key, values));
    }
    let level = if county {
        Level::County
    } else if !rows.is_empty() && rows.iter().all(|(k, _)| k.level == Level::National) {
        Level::National
    } else {
        Level::State
    };
    let mut panel = Panel::new(source, metric, level, start, dates.len());
    for (key, values) in rows {
        if key.level != level {
            return Err(IngestError::Canonical(format!("`{key}` mixed into a {level} file")));
        }
        panel.insert_values(key, values)?;
    }
    Ok(panel)
}

pub fn read_canonical(path: &Path, source: SourceId, metric: Metric) -> Result<Panel, IngestError> {
    let bytes = std::fs::read(path)?;
    parse_canonical(&bytes, source, metric)
}

//! Left join of county factor tables (demographics, policy dates) onto panels.

use std::collections::BTreeMap;

use serde::Serialize;

use super::canonical::{date_column, format_value};
use super::IngestError;
use crate::model::{normalize_fips, Level, Panel};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorTable {
    /// Factor column names, `ID` excluded.
    pub columns: Vec<String>,
    pub rows: BTreeMap<String, Vec<String>>,
}

impl FactorTable {
    pub fn from_csv(bytes: &[u8]) -> Result<Self, IngestError> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(bytes);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let id_i = header
            .iter()
            .position(|h| h == "ID")
            .ok_or_else(|| IngestError::MissingColumn("ID".into()))?;
        let columns = header
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != id_i)
            .map(|(_, h)| h.clone())
            .collect();
        let mut rows = BTreeMap::new();
        for record in rdr.records() {
            let record = record?;
            let fips = normalize_fips(&record[id_i])?;
            let values = record
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != id_i)
                .map(|(_, v)| v.to_string())
                .collect();
            if rows.insert(fips.clone(), values).is_some() {
                return Err(IngestError::DuplicateFactor(fips));
            }
        }
        Ok(FactorTable { columns, rows })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EnrichedTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Panel fips with no factor row; their factor cells are empty.
    pub unmatched: Vec<String>,
}

impl EnrichedTable {
    pub fn to_csv(&self) -> Result<Vec<u8>, IngestError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| IngestError::Canonical(e.to_string()))
    }
}

/// Joins on fips: one output row per panel series, canonical columns first,
/// then the factor columns.
pub fn join_factors(panel: &Panel, factors: &FactorTable) -> Result<EnrichedTable, IngestError> {
    if panel.level != Level::County {
        return Err(IngestError::Canonical("factor tables join county panels only".into()));
    }
    let mut header = vec!["ID".to_string(), "County".into(), "State".into()];
    header.extend(panel.dates().into_iter().map(date_column));
    header.extend(factors.columns.iter().cloned());
    let mut rows = Vec::with_capacity(panel.num_series());
    let mut unmatched = Vec::new();
    for s in panel.series() {
        let fips = s.key.fips.clone().unwrap_or_default();
        let mut row = vec![
            fips.clone(),
            s.key.county_name.clone().unwrap_or_default(),
            s.key.state_name.clone().unwrap_or_default(),
        ];
        row.extend(s.values().iter().map(|&v| format_value(v)));
        match factors.rows.get(&fips) {
            Some(values) => row.extend(values.iter().cloned()),
            None => {
                unmatched.push(fips);
                row.extend(std::iter::repeat_n(String::new(), factors.columns.len()));
            }
        }
        rows.push(row);
    }
    Ok(EnrichedTable { header, rows, unmatched })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Metric, SeriesKey, SourceId};
    use chrono::NaiveDate;

    fn panel() -> Panel {
        let start = NaiveDate::from_ymd_opt(2020, 1, 22).unwrap();
        let mut p = Panel::new(SourceId::NYT, Metric::Infection, Level::County, start, 1);
        for (f, n) in [("53061", "Snohomish"), ("53033", "King")] {
            p.insert_values(SeriesKey::county_from_fips(f, n).unwrap(), vec![1.0]).unwrap();
        }
        p
    }

    #[test]
    fn full_match() {
        let t = FactorTable::from_csv(b"ID,pop\n53061,800000\n53033,2200000\n").unwrap();
        let j = join_factors(&panel(), &t).unwrap();
        assert!(j.unmatched.is_empty());
        assert_eq!(j.rows.len(), 2);
        assert_eq!(j.header.len(), 4 + 2 - 1);
    }

    #[test]
    fn missing_fips_retained() {
        let t = FactorTable::from_csv(b"ID,pop\n53061,800000\n").unwrap();
        let j = join_factors(&panel(), &t).unwrap();
        assert_eq!(j.unmatched, vec!["53033".to_string()]);
        let king = j.rows.iter().find(|r| r[0] == "53033").unwrap();
        assert_eq!(king.last().unwrap(), "");
    }

    #[test]
    fn duplicate_fips_rejected() {
        let e = FactorTable::from_csv(b"ID,pop\n53061,1\n53061,2\n").unwrap_err();
        assert_eq!(e.to_string(), "duplicate fips 53061 in factor table");
    }
}

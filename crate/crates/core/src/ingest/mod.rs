//! Fetching, parsing, geographic normalization and canonical persistence.

pub mod canonical;
pub mod factors;
pub mod fetch;
pub mod geo;
pub mod parse;

use chrono::NaiveDate;
use thiserror::Error;

use crate::model::{Metric, ModelError, SourceId};

pub use canonical::{canonical_bytes, parse_canonical, read_canonical, write_canonical};
pub use factors::{join_factors, EnrichedTable, FactorTable};
pub use fetch::{fetch_source, fetch_with_retry, FetchError, RawSnapshot, SnapshotCache};
pub use geo::{normalize_geography, Exclusion, GeoRuleSet, MergeRule, NormalizationReport};
pub use parse::{parse_source, parse_source_with, ParseReport, ParsedPanel, RowError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("schema error: unknown column `{0}`")]
    Schema(String),
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),
    #[error("{source_id} does not publish {metric}")]
    UnsupportedMetric { source_id: SourceId, metric: Metric },
    #[error("payload contains no usable observations")]
    Empty,
    #[error("series {key} has no observation on {date}")]
    Gap { key: String, date: NaiveDate },
    #[error("invalid geo rules: {0}")]
    Rules(String),
    #[error("canonical file: {0}")]
    Canonical(String),
    #[error("duplicate fips {0} in factor table")]
    DuplicateFactor(String),
    #[error(transparent)]
    Fetch(#[from] FetchError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

//! Curation toolkit for multi-source cumulative count time series.
//!
//! The flow is ingest → compare → seasonality → detect → (human review) →
//! repair → export; [`pipeline`] wires the stages together.

pub mod compare;
pub mod detect;
pub mod ingest;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod repair;
pub mod seasonality;

pub use model::{
    to_cumulative, to_increments, CumulativeSeries, IncrementSeries, Level, Metric, Panel,
    SeriesKey, SourceId,
};

//! Source-to-source disagreement via the normalized dissimilarity measure.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CumulativeSeries, Metric, ModelError, Panel, SeriesKey, SourceId};

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("series are not aligned: lengths {0:?}")]
    Alignment(Vec<usize>),
    #[error("at least two sources are required, got {0}")]
    TooFewSources(usize),
    #[error("panels mix metrics or levels")]
    MixedPanels,
    #[error("panels share no common dates")]
    NoOverlap,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    L2,
    L1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissimilarityRecord {
    pub key: SeriesKey,
    pub metric: Metric,
    /// Always in `SourceId` order.
    pub source_pair: (SourceId, SourceId),
    pub d: f64,
    #[serde(rename = "T")]
    pub t: usize,
    pub mean_final: f64,
}

pub fn canonical_pair(a: SourceId, b: SourceId) -> (SourceId, SourceId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Mean over sources of the final cumulative value.
pub fn source_mean_final(series: &[&CumulativeSeries]) -> Result<f64, CompareError> {
    let lens: Vec<usize> = series.iter().map(|s| s.len()).collect();
    if lens.is_empty() || lens.iter().any(|&l| l != lens[0]) {
        return Err(CompareError::Alignment(lens));
    }
    Ok(series.iter().map(|s| s.last()).sum::<f64>() / series.len() as f64)
}

/// `(1/T)·‖a − b‖ / mean_final`, or 0 when `mean_final` is 0.
pub fn dissimilarity(
    a: &CumulativeSeries,
    b: &CumulativeSeries,
    mean_final: f64,
    norm: Norm,
) -> Result<f64, CompareError> {
    dissimilarity_values(a.values(), b.values(), mean_final, norm)
}

pub fn dissimilarity_values(
    a: &[f64],
    b: &[f64],
    mean_final: f64,
    norm: Norm,
) -> Result<f64, CompareError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(CompareError::Alignment(vec![a.len(), b.len()]));
    }
    if mean_final == 0.0 {
        return Ok(0.0);
    }
    let dist = match norm {
        Norm::L2 => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        Norm::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
    };
    Ok(dist / a.len() as f64 / mean_final)
}

/// Trims all panels to their common date range.
fn align(panels: &[&Panel]) -> Result<Vec<Panel>, CompareError> {
    if panels.len() < 2 {
        return Err(CompareError::TooFewSources(panels.len()));
    }
    let (metric, level) = (panels[0].metric, panels[0].level);
    if panels.iter().any(|p| p.metric != metric || p.level != level) {
        return Err(CompareError::MixedPanels);
    }
    let start = panels.iter().map(|p| p.start_date).max().unwrap();
    let end = panels
        .iter()
        .map(|p| crate::model::date_at(p.start_date, p.num_days() - 1))
        .min()
        .unwrap();
    if start > end {
        return Err(CompareError::NoOverlap);
    }
    panels
        .iter()
        .map(|p| p.window(start, end).map_err(Into::into))
        .collect()
}

/// Per-key comparison across all supplied sources.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub key: SeriesKey,
    pub t: usize,
    pub mean_final: f64,
    /// One value per pair, in the report's pair order.
    pub d: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coverage {
    pub source: SourceId,
    /// Keys present in some other source but not this one.
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub metric: Metric,
    pub level: crate::model::Level,
    pub norm: Norm,
    pub sources: Vec<SourceId>,
    pub pairs: Vec<(SourceId, SourceId)>,
    pub rows: Vec<CompareRow>,
    pub coverage: Vec<Coverage>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSummary {
    pub pair: String,
    pub exceeding: usize,
    pub max_d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareSummary {
    pub metric: Metric,
    pub level: crate::model::Level,
    pub threshold: f64,
    pub keys_compared: usize,
    pub pairs: Vec<PairSummary>,
    pub coverage: Vec<Coverage>,
}

pub fn pair_label(pair: (SourceId, SourceId)) -> String {
    format!("d_{}_{}", pair.0, pair.1)
}

/// Computes the dissimilarity of every source pair for every key present
/// in all panels.
pub fn compare_panels(panels: &[&Panel], norm: Norm) -> Result<CompareReport, CompareError> {
    let mut aligned = align(panels)?;
    aligned.sort_by_key(|p| p.source);
    let sources: Vec<SourceId> = aligned.iter().map(|p| p.source).collect();
    let mut pairs = Vec::new();
    for i in 0..aligned.len() {
        for j in i + 1..aligned.len() {
            pairs.push((i, j));
        }
    }
    let all_keys: BTreeSet<&SeriesKey> = aligned.iter().flat_map(|p| p.keys()).collect();
    let coverage = aligned
        .iter()
        .map(|p| Coverage {
            source: p.source,
            missing: all_keys
                .iter()
                .filter(|k| p.get(k).is_none())
                .map(|k| k.label())
                .collect(),
        })
        .collect();

    let mut rows = Vec::new();
    for key in all_keys {
        let series: Option<Vec<&CumulativeSeries>> = aligned.iter().map(|p| p.get(key)).collect();
        let Some(series) = series else { continue };
        let mean_final = source_mean_final(&series)?;
        let d = pairs
            .iter()
            .map(|&(i, j)| dissimilarity(series[i], series[j], mean_final, norm))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(CompareRow {
            key: key.clone(),
            t: series[0].len(),
            mean_final,
            d,
        });
    }
    Ok(CompareReport {
        metric: aligned[0].metric,
        level: aligned[0].level,
        norm,
        pairs: pairs.iter().map(|&(i, j)| (sources[i], sources[j])).collect(),
        sources,
        rows,
        coverage,
    })
}

/// Top `top_n` keys per source pair, by descending `d` then key order.
pub fn rank_dissimilar(
    panels: &[&Panel],
    top_n: usize,
    norm: Norm,
) -> Result<Vec<Vec<DissimilarityRecord>>, CompareError> {
    let report = compare_panels(panels, norm)?;
    Ok(report.ranked(top_n))
}

impl CompareReport {
    pub fn ranked(&self, top_n: usize) -> Vec<Vec<DissimilarityRecord>> {
        self.pairs
            .iter()
            .enumerate()
            .map(|(pi, &pair)| {
                let mut recs: Vec<DissimilarityRecord> = self
                    .rows
                    .iter()
                    .map(|r| DissimilarityRecord {
                        key: r.key.clone(),
                        metric: self.metric,
                        source_pair: pair,
                        d: r.d[pi],
                        t: r.t,
                        mean_final: r.mean_final,
                    })
                    .collect();
                recs.sort_by(|a, b| b.d.total_cmp(&a.d).then_with(|| a.key.cmp(&b.key)));
                recs.truncate(top_n);
                recs
            })
            .collect()
    }

    pub fn summary(&self, threshold: f64) -> CompareSummary {
        CompareSummary {
            metric: self.metric,
            level: self.level,
            threshold,
            keys_compared: self.rows.len(),
            pairs: self
                .pairs
                .iter()
                .enumerate()
                .map(|(pi, &pair)| PairSummary {
                    pair: pair_label(pair),
                    exceeding: self.rows.iter().filter(|r| r.d[pi] > threshold).count(),
                    max_d: self.rows.iter().map(|r| r.d[pi]).fold(0.0, f64::max),
                })
                .collect(),
            coverage: self.coverage.clone(),
        }
    }

    /// CSV with columns `level,fips,county,state,metric,T,mean_final,d_*`.
    pub fn to_csv(&self) -> Result<Vec<u8>, CompareError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let mut header: Vec<String> = ["level", "fips", "county", "state", "metric", "T", "mean_final"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(self.pairs.iter().map(|&p| pair_label(p)));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.key.level.to_string(),
                r.key.fips.clone().unwrap_or_default(),
                r.key.county_name.clone().unwrap_or_default(),
                r.key.state_name.clone().unwrap_or_default(),
                self.metric.to_string(),
                r.t.to_string(),
                r.mean_final.to_string(),
            ];
            rec.extend(r.d.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| CompareError::Io(e.into_error()))
    }

    /// Writes `compare_<level>_<metric>.csv` and a matching summary JSON.
    pub fn write(&self, dir: &Path, threshold: f64) -> Result<(), CompareError> {
        let stem = format!("compare_{}_{}", self.level, self.metric);
        crate::pipeline::atomic_write(&dir.join(format!("{stem}.csv")), &self.to_csv()?)?;
        let mut json = serde_json::to_vec_pretty(&self.summary(threshold))?;
        json.push(b'\n');
        crate::pipeline::atomic_write(&dir.join(format!("{stem}.summary.json")), &json)?;
        Ok(())
    }
}

/// Per-pair maps from key label to d, handy for lookups in reports.
pub fn pair_maps(report: &CompareReport) -> BTreeMap<String, BTreeMap<String, f64>> {
    report
        .pairs
        .iter()
        .enumerate()
        .map(|(pi, &p)| {
            (
                pair_label(p),
                report.rows.iter().map(|r| (r.key.label(), r.d[pi])).collect(),
            )
        })
        .collect()
}

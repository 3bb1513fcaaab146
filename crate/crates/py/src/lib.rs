//! Python bindings. Dates cross the boundary as ISO strings and composite
//! results come back as plain dicts with the same field names as the JSON
//! artifacts.

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::NaiveDate;
use pyo3::exceptions::{PyIOError, PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use serde::Serialize;

use countcurate::compare::{dissimilarity_values, Norm};
use countcurate::detect::{self, AnomalyRecord, ChangePointConfig, Link, SpeedConstraintConfig};
use countcurate::ingest::{canonical_bytes, parse_canonical};
use countcurate::model::{self, state_by_fips, Level, Metric, SeriesKey, SourceId};
use countcurate::pipeline::{
    self, append_decision, read_decisions, CurationDecision, PipelineConfig, RepairSettings,
    StageSelection, Verdict,
};
use countcurate::repair::{redistribute_residual, repair_od_values, RepairOverride};
use countcurate::seasonality;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_date(s: &str) -> PyResult<NaiveDate> {
    s.parse().map_err(|e| value_err(format!("bad date `{s}`: {e}")))
}

fn parse_norm(s: &str) -> PyResult<Norm> {
    match s.to_ascii_lowercase().as_str() {
        "l2" => Ok(Norm::L2),
        "l1" => Ok(Norm::L1),
        _ => Err(value_err(format!("unknown norm `{s}`"))),
    }
}

fn parse_link(s: &str) -> PyResult<Link> {
    match s {
        "log" | "log_quasipoisson" => Ok(Link::LogQuasipoisson),
        "identity" | "identity_gaussian" => Ok(Link::IdentityGaussian),
        _ => Err(value_err(format!("unknown link `{s}`"))),
    }
}

fn make_key(level: Level, label: &str) -> PyResult<SeriesKey> {
    match level {
        Level::National => Ok(SeriesKey::national()),
        Level::State => Ok(SeriesKey::state(label)),
        Level::County => {
            let fips = model::normalize_fips(label).map_err(value_err)?;
            let state = state_by_fips(&fips[..2]).ok_or_else(|| value_err(format!("unknown state code in {fips}")))?;
            SeriesKey::county(&fips, "", state.name).map_err(value_err)
        }
    }
}

/// Cumulative counts for one location, metric and source.
#[pyclass(name = "CumulativeSeries", module = "countcurate", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySeries(model::CumulativeSeries);

#[pymethods]
impl PySeries {
    #[new]
    #[pyo3(signature = (values, start_date, label = "US", level = "national", metric = "infection", source = "nyt"))]
    fn new(values: Vec<f64>, start_date: &str, label: &str, level: &str, metric: &str, source: &str) -> PyResult<Self> {
        let level: Level = level.parse().map_err(value_err)?;
        let metric: Metric = metric.parse().map_err(value_err)?;
        let source: SourceId = source.parse().map_err(value_err)?;
        let s = model::CumulativeSeries::new(make_key(level, label)?, metric, source, parse_date(start_date)?, values)
            .map_err(value_err)?;
        Ok(PySeries(s))
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    #[getter]
    fn start_date(&self) -> String {
        self.0.start_date.to_string()
    }

    #[getter]
    fn label(&self) -> String {
        self.0.key.label()
    }

    #[getter]
    fn metric(&self) -> &'static str {
        self.0.metric.as_str()
    }

    #[getter]
    fn source(&self) -> &'static str {
        self.0.source.as_str()
    }

    fn increments(&self) -> Vec<f64> {
        self.0.to_increments().values
    }

    fn is_nondecreasing(&self) -> bool {
        self.0.is_nondecreasing()
    }

    /// Clamps order violations backwards from the last value.
    fn repair_od(&self) -> Self {
        PySeries(countcurate::repair::repair_od(&self.0))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "CumulativeSeries({} {} {}, {} days from {})",
            self.0.source,
            self.0.metric,
            self.0.key,
            self.0.len(),
            self.0.start_date
        )
    }
}

/// All series of one source, metric and level on a shared date axis.
#[pyclass(name = "Panel", module = "countcurate", frozen)]
struct PyPanel(model::Panel);

#[pymethods]
impl PyPanel {
    /// Parses the canonical wide CSV layout.
    #[staticmethod]
    fn from_canonical(data: &[u8], source: &str, metric: &str) -> PyResult<Self> {
        let source: SourceId = source.parse().map_err(value_err)?;
        let metric: Metric = metric.parse().map_err(value_err)?;
        parse_canonical(data, source, metric).map(PyPanel).map_err(value_err)
    }

    fn to_canonical<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        let bytes = canonical_bytes(&self.0).map_err(value_err)?;
        Ok(PyBytes::new(py, &bytes))
    }

    #[getter]
    fn start_date(&self) -> String {
        self.0.start_date.to_string()
    }

    #[getter]
    fn num_days(&self) -> usize {
        self.0.num_days()
    }

    fn labels(&self) -> Vec<String> {
        self.0.keys().map(|k| k.label()).collect()
    }

    fn get(&self, label: &str) -> PyResult<PySeries> {
        self.0
            .get_by_label(label)
            .cloned()
            .map(PySeries)
            .ok_or_else(|| PyKeyError::new_err(label.to_string()))
    }

    fn __len__(&self) -> usize {
        self.0.keys().count()
    }
}

/// A detected anomaly with its stable id and lifecycle status.
#[pyclass(name = "AnomalyRecord", module = "countcurate", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyAnomaly(AnomalyRecord);

#[pymethods]
impl PyAnomaly {
    #[getter]
    fn id(&self) -> &str {
        &self.0.id
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind.as_str()
    }

    #[getter]
    fn status(&self) -> &'static str {
        self.0.status.as_str()
    }

    #[getter]
    fn t_index(&self) -> usize {
        self.0.t_index
    }

    #[getter]
    fn date(&self) -> String {
        self.0.date.to_string()
    }

    #[getter]
    fn magnitude(&self) -> f64 {
        self.0.magnitude
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0)
    }

    fn __repr__(&self) -> String {
        format!("AnomalyRecord({} {} {} {})", self.0.id, self.0.kind, self.0.date, self.0.status)
    }
}

#[pyfunction]
#[pyo3(signature = (a, b, mean_final, norm = "l2"))]
fn dissimilarity(a: Vec<f64>, b: Vec<f64>, mean_final: f64, norm: &str) -> PyResult<f64> {
    dissimilarity_values(&a, &b, mean_final, parse_norm(norm)?).map_err(value_err)
}

#[pyfunction]
fn detect_od_violations(series: &PySeries) -> Vec<PyAnomaly> {
    detect::detect_od_violations(&series.0).into_iter().map(PyAnomaly).collect()
}

#[pyfunction]
#[pyo3(signature = (series, window_w = 14, sc2 = 5.0, min_count = 30.0, sc1 = None))]
fn detect_point_anomalies(
    series: &PySeries,
    window_w: usize,
    sc2: f64,
    min_count: f64,
    sc1: Option<f64>,
) -> PyResult<Vec<PyAnomaly>> {
    let cfg = SpeedConstraintConfig { window_w, sc1, sc2, min_count };
    let found = detect::detect_point_anomalies(&series.0, &cfg).map_err(value_err)?;
    Ok(found.into_iter().map(PyAnomaly).collect())
}

/// Segmented-regression fit on daily increments. Returns the fit as a dict
/// and, when significant at `alpha`, the anomaly record.
#[pyfunction]
#[pyo3(signature = (increments, start_date, alpha = 0.01, link = "log", margin = 5))]
fn fit_change_point<'py>(
    py: Python<'py>,
    increments: Vec<f64>,
    start_date: &str,
    alpha: f64,
    link: &str,
    margin: usize,
) -> PyResult<(Bound<'py, PyAny>, Option<PyAnomaly>)> {
    let z = model::IncrementSeries::from_values(parse_date(start_date)?, increments);
    let cfg = ChangePointConfig { link: parse_link(link)?, alpha, margin };
    let fit = detect::fit_change_point(&z, &cfg).map_err(value_err)?;
    let rec = detect::detect_change_points(&z, &cfg)
        .map_err(value_err)?
        .map(|(_, r)| PyAnomaly(r));
    Ok((to_py(py, &fit)?, rec))
}

/// Runs one weekly-seasonality test (`qs`, `friedman`, `kruskal_wallis`,
/// `welch`) or, with `test="ensemble"`, all four with a majority vote.
#[pyfunction]
#[pyo3(signature = (increments, start_date, test = "ensemble", alpha = 0.01))]
fn seasonality_test<'py>(
    py: Python<'py>,
    increments: Vec<f64>,
    start_date: &str,
    test: &str,
    alpha: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let z = model::IncrementSeries::from_values(parse_date(start_date)?, increments);
    let r = match test {
        "ensemble" => return to_py(py, &seasonality::ensemble_seasonal(&z, alpha).map_err(value_err)?),
        "qs" => seasonality::qs_test(&z),
        "friedman" => seasonality::friedman_test(&z),
        "kruskal_wallis" => seasonality::kruskal_wallis_test(&z),
        "welch" => seasonality::welch_anova_test(&z),
        _ => return Err(value_err(format!("unknown test `{test}`"))),
    };
    to_py(py, &r.map_err(value_err)?)
}

#[pyfunction]
fn repair_od(values: Vec<f64>) -> Vec<f64> {
    repair_od_values(&values)
}

/// Replaces `z[t_m]` by `z_hat` and spreads the residual over `period`.
/// Returns the new increments and the redistribution details.
#[pyfunction]
fn redistribute<'py>(
    py: Python<'py>,
    mut z: Vec<f64>,
    t_m: usize,
    z_hat: f64,
    period: Vec<usize>,
) -> PyResult<(Vec<f64>, Bound<'py, PyAny>)> {
    let r = redistribute_residual(&mut z, t_m, z_hat, &period).map_err(value_err)?;
    Ok((z, to_py(py, &r)?))
}

/// Full series repair: order violations are clamped, then the Confirmed
/// point anomalies among `records` are repaired. `overrides` maps anomaly
/// ids to inclusive `(lo, hi)` periods.
#[pyfunction]
#[pyo3(signature = (series, records, overrides = None))]
fn repair_series<'py>(
    py: Python<'py>,
    series: &PySeries,
    records: Vec<Bound<'py, PyAny>>,
    overrides: Option<BTreeMap<String, (usize, usize)>>,
) -> PyResult<(Vec<f64>, Bound<'py, PyAny>)> {
    let json = py.import("json")?;
    let records: Vec<AnomalyRecord> = records
        .iter()
        .map(|r| {
            if let Ok(a) = r.cast::<PyAnomaly>() {
                return Ok(a.get().0.clone());
            }
            let text: String = json.call_method1("dumps", (r,))?.extract()?;
            serde_json::from_str(&text).map_err(value_err)
        })
        .collect::<PyResult<_>>()?;
    let refs: Vec<&AnomalyRecord> = records.iter().collect();
    let overrides: BTreeMap<String, RepairOverride> = overrides
        .unwrap_or_default()
        .into_iter()
        .map(|(id, p)| (id, RepairOverride { period: Some(p), method: None }))
        .collect();
    let rep = pipeline::repair_series(&series.0, &refs, &RepairSettings::default(), &overrides);
    Ok((rep.values, to_py(py, &rep.results)?))
}

/// Loads a TOML pipeline configuration, optionally redirecting all outputs,
/// runs it and returns the run report.
#[pyfunction]
#[pyo3(signature = (config, output_dir = None, stages = None))]
fn run_pipeline<'py>(
    py: Python<'py>,
    config: PathBuf,
    output_dir: Option<PathBuf>,
    stages: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = PipelineConfig::read(&config).map_err(value_err)?;
    if let Some(out) = output_dir {
        cfg.decision_log = out.join("decisions.jsonl");
        cfg.cache_dir = out.join("cache");
        cfg.output_dir = out;
    }
    let sel = match stages {
        None => StageSelection::ALL,
        Some(names) => {
            let mut sel = StageSelection::INGEST;
            for n in &names {
                match n.as_str() {
                    "ingest" => {}
                    "compare" => sel.compare = true,
                    "seasonality" => sel.seasonality = true,
                    "detect" => sel.detect = true,
                    "repair" => {
                        sel.detect = true;
                        sel.repair = true
                    }
                    _ => return Err(value_err(format!("unknown stage `{n}`"))),
                }
            }
            sel
        }
    };
    let report = py
        .detach(|| pipeline::run_stages(&cfg, sel))
        .map_err(value_err)?;
    to_py(py, &report)
}

/// Appends one curation decision to a decision log.
#[pyfunction]
#[pyo3(signature = (log_path, anomaly_id, verdict, period = None, note = "", actor = ""))]
fn decide(
    log_path: PathBuf,
    anomaly_id: &str,
    verdict: &str,
    period: Option<(usize, usize)>,
    note: &str,
    actor: &str,
) -> PyResult<()> {
    let verdict: Verdict = verdict.parse().map_err(value_err)?;
    let mut d = CurationDecision::new(anomaly_id, verdict);
    d.period_override = period;
    d.note = note.to_string();
    d.actor = actor.to_string();
    append_decision(&log_path, &d).map_err(|e| PyIOError::new_err(e.to_string()))
}

/// Effective decision per anomaly id; the latest decision wins.
#[pyfunction]
fn effective_decisions<'py>(py: Python<'py>, log_path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let log = read_decisions(&log_path).map_err(|e| PyIOError::new_err(e.to_string()))?;
    to_py(py, &log.effective)
}

#[pyfunction]
fn chisq_cdf(x: f64, df: f64) -> PyResult<f64> {
    countcurate::numerics::chisq_cdf(x, df).map_err(value_err)
}

#[pymodule]
#[pyo3(name = "countcurate")]
fn countcurate_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySeries>()?;
    m.add_class::<PyPanel>()?;
    m.add_class::<PyAnomaly>()?;
    m.add_function(wrap_pyfunction!(dissimilarity, m)?)?;
    m.add_function(wrap_pyfunction!(detect_od_violations, m)?)?;
    m.add_function(wrap_pyfunction!(detect_point_anomalies, m)?)?;
    m.add_function(wrap_pyfunction!(fit_change_point, m)?)?;
    m.add_function(wrap_pyfunction!(seasonality_test, m)?)?;
    m.add_function(wrap_pyfunction!(repair_od, m)?)?;
    m.add_function(wrap_pyfunction!(redistribute, m)?)?;
    m.add_function(wrap_pyfunction!(repair_series, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(decide, m)?)?;
    m.add_function(wrap_pyfunction!(effective_decisions, m)?)?;
    m.add_function(wrap_pyfunction!(chisq_cdf, m)?)?;
    Ok(())
}

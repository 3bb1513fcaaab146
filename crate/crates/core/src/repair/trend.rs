//! One-day predictors: exponential trend, linear trend, log-autoregression,
//! and their error-weighted combination.

use serde::{Deserialize, Serialize};

use super::fit::{fit_dropping, ReducedFit};
use super::RepairError;
use crate::numerics::{Family, IrlsOptions, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendKind {
    /// `log E(Z_t) = β0 + β1 t`
    ExpTrend,
    /// `E(Z_t) = β0 + β1 t`
    LinTrend,
    /// `log E(Z_t | Z_{t−1}) = β0 + β1 log(Z_{t−1} + 1)`
    ExpAr,
}

impl TrendKind {
    pub const ALL: [TrendKind; 3] = [TrendKind::ExpTrend, TrendKind::LinTrend, TrendKind::ExpAr];
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendFit {
    pub kind: TrendKind,
    pub reduced: ReducedFit,
}

impl TrendFit {
    pub fn coefficients(&self) -> &[f64] {
        &self.reduced.coefficients
    }

    pub fn boundary(&self) -> bool {
        self.reduced.fit.boundary
    }

    /// Mean at time `t`; `prev` is `Z_{t−1}` (used by [`TrendKind::ExpAr`]).
    pub fn predict(&self, t: f64, prev: f64) -> f64 {
        let x = match self.kind {
            TrendKind::ExpAr => (prev + 1.0).ln(),
            _ => t,
        };
        self.reduced.predict(&[1.0, x])
    }
}

const MIN_WINDOW: usize = 5;

fn check(z: &[f64], log_link: bool) -> Result<(), RepairError> {
    if z.len() < MIN_WINDOW {
        return Err(RepairError::TooShort {
            len: z.len(),
            needed: MIN_WINDOW,
        });
    }
    if log_link {
        if let Some((index, &value)) = z.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(RepairError::NegativeIncrement { index, value });
        }
    }
    Ok(())
}

fn trend_design(t: &[f64], second: &str) -> Matrix {
    Matrix::from_fn(t.len(), 2, |i, j| if j == 0 { 1.0 } else { t[i] })
        .with_names(["(Intercept)", second])
}

/// Log-link quasi-Poisson trend over `(t, z)` pairs.
pub fn fit_exp_trend(z: &[f64], t: &[f64]) -> Result<TrendFit, RepairError> {
    check(z, true)?;
    let reduced = fit_dropping(&trend_design(t, "t"), z, Family::QuasiPoissonLog, IrlsOptions::default())?;
    Ok(TrendFit {
        kind: TrendKind::ExpTrend,
        reduced,
    })
}

/// Least-squares line over `(t, z)` pairs.
pub fn fit_lin_trend(z: &[f64], t: &[f64]) -> Result<TrendFit, RepairError> {
    check(z, false)?;
    let reduced = fit_dropping(&trend_design(t, "t"), z, Family::GaussianIdentity, IrlsOptions::default())?;
    Ok(TrendFit {
        kind: TrendKind::LinTrend,
        reduced,
    })
}

/// Quasi-Poisson regression of `Z_t` on `log(Z_{t−1} + 1)` over
/// consecutive pairs of `z`.
pub fn fit_exp_ar(z: &[f64]) -> Result<TrendFit, RepairError> {
    check(z, true)?;
    let lag: Vec<f64> = z[..z.len() - 1].iter().map(|v| (v + 1.0).ln()).collect();
    let reduced = fit_dropping(
        &trend_design(&lag, "log_lag1"),
        &z[1..],
        Family::QuasiPoissonLog,
        IrlsOptions::default(),
    )?;
    Ok(TrendFit {
        kind: TrendKind::ExpAr,
        reduced,
    })
}

/// Fits `kind` on `window` (values at 1-based times `t0, t0+1, …`) and
/// predicts the next day.
pub fn predict_next(kind: TrendKind, window: &[f64], t0: f64) -> Result<f64, RepairError> {
    let t: Vec<f64> = (0..window.len()).map(|i| t0 + i as f64).collect();
    let next_t = t0 + window.len() as f64;
    let prev = *window.last().ok_or(RepairError::TooShort { len: 0, needed: MIN_WINDOW })?;
    let fit = match kind {
        TrendKind::ExpTrend => fit_exp_trend(window, &t)?,
        TrendKind::LinTrend => fit_lin_trend(window, &t)?,
        TrendKind::ExpAr => fit_exp_ar(window)?,
    };
    Ok(fit.predict(next_t, prev))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorForecast {
    pub prediction: f64,
    /// Absolute one-step errors on recent days, oldest first.
    pub errors: Vec<f64>,
}

pub const CLEP_ERROR_DAYS: usize = 5;
pub const CLEP_EPS: f64 = 1e-6;

/// Weighted mean of predictions with weights proportional to
/// `1 / (MAE over the last five errors + eps)`. Falls back to equal
/// weights when any predictor has no error history.
pub fn clep_combine(predictors: &[PredictorForecast], eps: f64) -> Option<f64> {
    if predictors.is_empty() {
        return None;
    }
    let weights: Vec<f64> = if predictors.iter().any(|p| p.errors.is_empty()) {
        vec![1.0; predictors.len()]
    } else {
        predictors
            .iter()
            .map(|p| {
                let recent = &p.errors[p.errors.len().saturating_sub(CLEP_ERROR_DAYS)..];
                let mae = recent.iter().sum::<f64>() / recent.len() as f64;
                1.0 / (mae + eps)
            })
            .collect()
    };
    let total: f64 = weights.iter().sum();
    Some(
        predictors
            .iter()
            .zip(&weights)
            .map(|(p, w)| p.prediction * w / total)
            .sum(),
    )
}

/// Forecast of each trend predictor for the day after `window`, with its
/// rolling-origin errors over the window's last days.
pub fn clep_forecasts(window: &[f64], t0: f64) -> Vec<(TrendKind, PredictorForecast)> {
    TrendKind::ALL
        .iter()
        .filter_map(|&kind| {
            let prediction = predict_next(kind, window, t0).ok()?;
            let errors = (0..CLEP_ERROR_DAYS)
                .rev()
                .filter_map(|back| {
                    let cut = window.len().checked_sub(back + 1)?;
                    let p = predict_next(kind, &window[..cut], t0).ok()?;
                    Some((window[cut] - p).abs())
                })
                .collect();
            Some((kind, PredictorForecast { prediction, errors }))
        })
        .collect()
}

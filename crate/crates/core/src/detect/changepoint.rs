use serde::{Deserialize, Serialize};

use super::{AnomalyDetail, AnomalyKind, AnomalyRecord, DetectError};
use crate::model::IncrementSeries;
use crate::numerics::{irls_glm, normal_sf, ols_fit, Family, GlmFit, IrlsOptions, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    LogQuasipoisson,
    IdentityGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChangePointConfig {
    pub link: Link,
    /// Significance level applied to the search-adjusted p-value.
    pub alpha: f64,
    /// Minimum number of points kept on each side of a candidate.
    pub margin: usize,
}

impl Default for ChangePointConfig {
    fn default() -> Self {
        ChangePointConfig {
            link: Link::LogQuasipoisson,
            alpha: 0.01,
            margin: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangePointFit {
    /// Breakpoint on the 1-based time axis used by the design.
    pub phi: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub se_beta2: f64,
    /// Wald p-value for the slope change at the selected breakpoint.
    pub wald_p: f64,
    /// Davies upper bound on the p-value of the Wald statistic maximized
    /// over the candidate grid.
    pub adjusted_p: f64,
    pub link: Link,
    /// `(candidate, deviance)` for every candidate that could be fitted.
    pub profile: Vec<(f64, f64)>,
}

impl ChangePointFit {
    /// Day offset (0-based) of the breakpoint.
    pub fn t_index(&self) -> usize {
        self.phi as usize - 1
    }
}

fn design(n: usize, phi: f64) -> Matrix {
    Matrix::from_fn(n, 3, |i, j| {
        let t = (i + 1) as f64;
        match j {
            0 => 1.0,
            1 => t,
            _ => (t - phi).max(0.0),
        }
    })
    .with_names(["(Intercept)", "t", "hinge"])
}

/// Two-sided Davies bound for the supremum of a Wald process observed on a
/// grid: `2Φ(−M) + V·exp(−M²/2)/√(2π)` with `M = max|z|` and `V` the total
/// variation of `z` along the grid.
pub fn davies_p(z: &[f64]) -> f64 {
    let finite: Vec<f64> = z.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return 1.0;
    }
    let m = finite.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let v: f64 = finite.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let p = 2.0 * normal_sf(m) + v * (-m * m / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    p.clamp(0.0, 1.0)
}

fn fit_at(y: &[f64], phi: f64, link: Link, start: Option<&[f64]>) -> Result<GlmFit, DetectError> {
    let x = design(y.len(), phi);
    let fit = match link {
        Link::LogQuasipoisson => {
            irls_glm(&x, y, Family::QuasiPoissonLog, IrlsOptions::default(), start)?
        }
        Link::IdentityGaussian => ols_fit(&x, y)?,
    };
    Ok(fit)
}

/// Exhaustive profile search over integer breakpoints. Always returns the
/// best fit; significance is left to the caller.
pub fn fit_change_point(z: &IncrementSeries, cfg: &ChangePointConfig) -> Result<ChangePointFit, DetectError> {
    let y = &z.values;
    let n = y.len();
    let needed = (4 * cfg.margin).max(20);
    if n < needed {
        return Err(DetectError::TooShort { len: n, needed });
    }
    if cfg.link == Link::LogQuasipoisson {
        if let Some((index, &value)) = y.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(DetectError::NegativeIncrement { index, value });
        }
    }
    let lo = cfg.margin + 1;
    let hi = n - cfg.margin;
    let mut profile = Vec::new();
    let mut z_path = Vec::new();
    let mut best: Option<(f64, GlmFit)> = None;
    let mut start: Option<Vec<f64>> = None;
    let mut last_err = None;
    for phi in lo..=hi {
        let phi = phi as f64;
        let fit = match fit_at(y, phi, cfg.link, start.as_deref()) {
            Ok(f) if f.converged && !f.boundary => f,
            Ok(_) => {
                last_err = Some("did not converge".to_string());
                continue;
            }
            Err(e) => {
                last_err = Some(e.to_string());
                continue;
            }
        };
        start = Some(fit.coefficients.clone());
        profile.push((phi, fit.deviance));
        z_path.push(fit.wald(2).0);
        if best.as_ref().is_none_or(|(_, b)| fit.deviance < b.deviance) {
            best = Some((phi, fit));
        }
    }
    let Some((phi, fit)) = best else {
        return Err(DetectError::NoConvergence(last_err.unwrap_or_default()));
    };
    let (_, wald_p) = fit.wald(2);
    Ok(ChangePointFit {
        phi,
        beta0: fit.coefficients[0],
        beta1: fit.coefficients[1],
        beta2: fit.coefficients[2],
        se_beta2: fit.covariance[2][2].sqrt(),
        wald_p,
        adjusted_p: davies_p(&z_path),
        link: cfg.link,
        profile,
    })
}

/// Fits the breakpoint model and, when the slope change is significant,
/// returns the fit together with its anomaly record.
pub fn detect_change_points(
    z: &IncrementSeries,
    cfg: &ChangePointConfig,
) -> Result<Option<(ChangePointFit, AnomalyRecord)>, DetectError> {
    let fit = fit_change_point(z, cfg)?;
    if !(fit.adjusted_p < cfg.alpha) {
        return Ok(None);
    }
    let rec = AnomalyRecord::new(
        &z.key,
        z.metric,
        z.source,
        AnomalyKind::ChangePoint,
        z.start_date,
        fit.t_index(),
        fit.beta2,
        AnomalyDetail::ChangePoint {
            phi: fit.phi,
            beta0: fit.beta0,
            beta1: fit.beta1,
            beta2: fit.beta2,
            se_beta2: fit.se_beta2,
            wald_p: fit.wald_p,
            adjusted_p: fit.adjusted_p,
            link: fit.link,
        },
    );
    Ok(Some((fit, rec)))
}

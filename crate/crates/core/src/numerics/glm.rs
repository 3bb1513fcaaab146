//! Ordinary least squares and IRLS fitting of log-link Poisson-type GLMs.

use serde::{Deserialize, Serialize};

use super::linalg::{Matrix, Qr};
use super::special::{normal_sf, t_two_sided};
use super::NumericsError;

/// Largest linear predictor allowed before exponentiation.
const ETA_MAX: f64 = 700.0;
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Log link, dispersion fixed at 1.
    PoissonLog,
    /// Log link, Pearson dispersion estimate.
    QuasiPoissonLog,
    /// Identity link, residual variance estimate.
    GaussianIdentity,
}

impl Family {
    fn is_log(self) -> bool {
        !matches!(self, Family::GaussianIdentity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions {
    pub max_iter: usize,
    /// Relative change in deviance that counts as converged.
    pub tol: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        IrlsOptions {
            max_iter: 50,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub family: Family,
    pub coefficients: Vec<f64>,
    /// Row-major `p × p`, already scaled by the dispersion.
    pub covariance: Vec<Vec<f64>>,
    pub deviance: f64,
    pub iterations: usize,
    pub converged: bool,
    pub dispersion: f64,
    pub fitted: Vec<f64>,
    pub df_residual: usize,
    /// Set when the log-likelihood is maximized at infinity (all-zero
    /// responses under a log link). The intercept is then −∞.
    pub boundary: bool,
}

impl GlmFit {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.coefficients.len())
            .map(|j| self.covariance[j][j].sqrt())
            .collect()
    }

    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        row.iter()
            .zip(&self.coefficients)
            .map(|(x, b)| if *x == 0.0 { 0.0 } else { x * b })
            .sum()
    }

    /// Mean response at a covariate row.
    pub fn predict(&self, row: &[f64]) -> f64 {
        let eta = self.linear_predictor(row);
        match self.family {
            Family::GaussianIdentity => eta,
            _ => eta.min(ETA_MAX).exp(),
        }
    }

    /// Wald statistic and two-sided p-value for coefficient `j`. Uses the
    /// t reference when the dispersion was estimated, normal otherwise.
    pub fn wald(&self, j: usize) -> (f64, f64) {
        let se = self.covariance[j][j].sqrt();
        let z = self.coefficients[j] / se;
        if !z.is_finite() {
            let p = if self.coefficients[j] == 0.0 { 1.0 } else { 0.0 };
            return (z, p);
        }
        let p = match self.family {
            Family::PoissonLog => 2.0 * normal_sf(z.abs()),
            _ if self.df_residual > 0 => {
                t_two_sided(z, self.df_residual as f64).unwrap_or(f64::NAN)
            }
            _ => f64::NAN,
        };
        (z, p.clamp(0.0, 1.0))
    }
}

fn check_inputs(x: &Matrix, y: &[f64], nonneg: bool) -> Result<(), NumericsError> {
    if x.nrows() != y.len() {
        return Err(NumericsError::Dimension(format!(
            "design has {} rows, response has {}",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() < x.ncols() {
        return Err(NumericsError::Dimension(format!(
            "{} rows cannot determine {} coefficients",
            x.nrows(),
            x.ncols()
        )));
    }
    if let Some((index, &value)) = y
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || (nonneg && **v < 0.0))
    {
        return Err(NumericsError::InvalidResponse { index, value });
    }
    Ok(())
}

/// Least squares via QR. Dispersion is the residual variance.
pub fn ols_fit(design: &Matrix, response: &[f64]) -> Result<GlmFit, NumericsError> {
    check_inputs(design, response, false)?;
    let qr = Qr::new(design)?;
    let beta = qr.solve(response);
    let fitted = design.mul_vec(&beta);
    let rss: f64 = response
        .iter()
        .zip(&fitted)
        .map(|(y, f)| (y - f) * (y - f))
        .sum();
    let df = design.nrows() - design.ncols();
    let dispersion = if df > 0 { rss / df as f64 } else { f64::NAN };
    let covariance = scale(qr.inverse_gram(), dispersion);
    Ok(GlmFit {
        family: Family::GaussianIdentity,
        coefficients: beta,
        covariance,
        deviance: rss,
        iterations: 1,
        converged: true,
        dispersion,
        fitted,
        df_residual: df,
        boundary: false,
    })
}

fn scale(mut m: Vec<Vec<f64>>, s: f64) -> Vec<Vec<f64>> {
    for row in &mut m {
        for v in row {
            *v *= s;
        }
    }
    m
}

fn poisson_deviance(y: &[f64], mu: &[f64]) -> f64 {
    2.0 * y
        .iter()
        .zip(mu)
        .map(|(&y, &m)| {
            let t = if y > 0.0 { y * (y / m).ln() } else { 0.0 };
            t - (y - m)
        })
        .sum::<f64>()
}

fn means(x: &Matrix, beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let eta: Vec<f64> = x.mul_vec(beta).into_iter().map(|e| e.min(ETA_MAX)).collect();
    let mu = eta.iter().map(|e| e.exp()).collect();
    (eta, mu)
}

fn intercept_column(x: &Matrix) -> Option<usize> {
    (0..x.ncols()).find(|&j| {
        let c = x.column(j);
        c[0] != 0.0 && c.iter().all(|v| *v == c[0])
    })
}

/// Iteratively reweighted least squares.
///
/// `start` optionally warm-starts the coefficients; otherwise the first
/// iteration starts from `μ = y + 0.1`.
pub fn irls_glm(
    design: &Matrix,
    response: &[f64],
    family: Family,
    opts: IrlsOptions,
    start: Option<&[f64]>,
) -> Result<GlmFit, NumericsError> {
    if !family.is_log() {
        return ols_fit(design, response);
    }
    check_inputs(design, response, true)?;
    let (n, p) = (design.nrows(), design.ncols());
    // the design must be usable regardless of the response
    Qr::new(design)?;

    if response.iter().all(|&y| y == 0.0) {
        return match intercept_column(design) {
            Some(j) => {
                let mut coefficients = vec![0.0; p];
                coefficients[j] = f64::NEG_INFINITY;
                Ok(GlmFit {
                    family,
                    coefficients,
                    covariance: vec![vec![f64::NAN; p]; p],
                    deviance: 0.0,
                    iterations: 0,
                    converged: true,
                    dispersion: f64::NAN,
                    fitted: vec![0.0; n],
                    df_residual: n - p,
                    boundary: true,
                })
            }
            None => Err(NumericsError::Boundary),
        };
    }

    let (mut eta, mut mu): (Vec<f64>, Vec<f64>) = match start {
        Some(b) if b.len() == p && b.iter().all(|v| v.is_finite()) => means(design, b),
        _ => {
            let mu: Vec<f64> = response.iter().map(|y| y + 0.1).collect();
            (mu.iter().map(|m| m.ln()).collect(), mu)
        }
    };
    let mut dev_old = poisson_deviance(response, &mu);
    let mut beta: Option<Vec<f64>> = start.filter(|b| b.len() == p).map(|b| b.to_vec());
    let mut converged = false;
    let mut iterations = 0;
    let mut last_qr = None;

    for iter in 1..=opts.max_iter {
        iterations = iter;
        let sw: Vec<f64> = mu.iter().map(|m| m.sqrt()).collect();
        let z: Vec<f64> = (0..n)
            .map(|i| (eta[i] + (response[i] - mu[i]) / mu[i]) * sw[i])
            .collect();
        let xw = design.scale_rows(&sw);
        let qr = Qr::new(&xw)?;
        let mut beta_new = qr.solve(&z);
        let (mut eta_new, mut mu_new) = means(design, &beta_new);
        let mut dev = poisson_deviance(response, &mu_new);

        if let Some(prev) = &beta {
            let mut halvings = 0;
            while !dev.is_finite() || dev > dev_old + 1e-10 * (dev_old.abs() + 1.0) {
                halvings += 1;
                if halvings > MAX_HALVINGS {
                    return Err(NumericsError::StepHalvingExhausted { iteration: iter });
                }
                for (b, o) in beta_new.iter_mut().zip(prev) {
                    *b = 0.5 * (*b + o);
                }
                (eta_new, mu_new) = means(design, &beta_new);
                dev = poisson_deviance(response, &mu_new);
            }
        } else if !dev.is_finite() {
            return Err(NumericsError::StepHalvingExhausted { iteration: iter });
        }

        let beta_change = beta.as_ref().map_or(f64::INFINITY, |prev| {
            prev.iter()
                .zip(&beta_new)
                .map(|(a, b)| (a - b).abs() / (b.abs() + 1.0))
                .fold(0.0, f64::max)
        });
        let dev_change = (dev - dev_old).abs() / (dev.abs() + 0.1);
        eta = eta_new;
        mu = mu_new;
        dev_old = dev;
        beta = Some(beta_new);
        last_qr = Some(qr);
        if dev_change < opts.tol && beta_change < opts.tol {
            converged = true;
            break;
        }
    }

    let beta = beta.expect("at least one iteration");
    // covariance at the final means
    let sw: Vec<f64> = mu.iter().map(|m| m.sqrt()).collect();
    let qr = Qr::new(&design.scale_rows(&sw)).or_else(|e| last_qr.ok_or(e))?;
    let df = n - p;
    let dispersion = match family {
        Family::PoissonLog => 1.0,
        _ if df > 0 => {
            response
                .iter()
                .zip(&mu)
                .map(|(y, m)| (y - m) * (y - m) / m)
                .sum::<f64>()
                / df as f64
        }
        _ => f64::NAN,
    };
    Ok(GlmFit {
        family,
        coefficients: beta,
        covariance: scale(qr.inverse_gram(), dispersion),
        deviance: dev_old,
        iterations,
        converged,
        dispersion,
        fitted: mu,
        df_residual: df,
        boundary: false,
    })
}

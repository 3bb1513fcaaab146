use serde::{Deserialize, Serialize};

use super::fit::fit_dropping;
use super::RepairError;
use crate::numerics::{Family, GlmFit, IrlsOptions, Matrix};

/// How lagged counts enter the log-mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagTransform {
    /// `log(Z + 1)`, the stable log-linear form.
    #[default]
    Log1p,
    Raw,
}

impl LagTransform {
    fn apply(self, z: f64) -> f64 {
        match self {
            LagTransform::Log1p => (z + 1.0).ln(),
            LagTransform::Raw => z,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngarchFit {
    pub p: usize,
    pub q: usize,
    pub transform: LagTransform,
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Log-means for every input day (initial days hold the warm start).
    pub nu: Vec<f64>,
    pub fit: GlmFit,
    pub dropped: Vec<String>,
    pub iterations: usize,
}

impl IngarchFit {
    /// Log-mean for the day after the last observation of `z`, which must
    /// be the series the model was fitted on (or an extension of it).
    pub fn next_log_mean(&self, z: &[f64]) -> f64 {
        let t = z.len();
        let nu = self.extend_nu(z);
        let mut v = self.beta0;
        for k in 1..=self.p {
            v += self.beta[k - 1] * self.transform.apply(z[t - k]);
        }
        for l in 1..=self.q {
            v += self.alpha[l - 1] * nu[t - l];
        }
        v
    }

    pub fn predict_next(&self, z: &[f64]) -> f64 {
        self.next_log_mean(z).min(700.0).exp()
    }

    fn extend_nu(&self, z: &[f64]) -> Vec<f64> {
        if z.len() == self.nu.len() {
            return self.nu.clone();
        }
        recursion(z, self.p, self.q, self.transform, self.beta0, &self.beta, &self.alpha, self.nu[0])
    }
}

#[allow(clippy::too_many_arguments)]
fn recursion(
    z: &[f64],
    p: usize,
    q: usize,
    tr: LagTransform,
    b0: f64,
    beta: &[f64],
    alpha: &[f64],
    init: f64,
) -> Vec<f64> {
    let m = p.max(q);
    let mut nu = vec![init; z.len()];
    for t in m..z.len() {
        let mut v = b0;
        for k in 1..=p {
            v += beta[k - 1] * tr.apply(z[t - k]);
        }
        for l in 1..=q {
            v += alpha[l - 1] * nu[t - l];
        }
        nu[t] = v;
    }
    nu
}

/// Quasi-conditional ML fit of the log-linear INGARCH(p, q) model
/// `ν_t = β0 + Σ β_k g(Z_{t−k}) + Σ α_l ν_{t−l}`.
///
/// For `q > 0` the lagged log-means are treated as covariates and the
/// GLM is refitted on the updated recursion until the deviance settles.
pub fn fit_ingarch(
    z: &[f64],
    p: usize,
    q: usize,
    transform: LagTransform,
    opts: IrlsOptions,
) -> Result<IngarchFit, RepairError> {
    if let Some((index, &value)) = z.iter().enumerate().find(|(_, v)| **v < 0.0 || !v.is_finite()) {
        return Err(RepairError::NegativeIncrement { index, value });
    }
    let needed = 10 + p + q;
    if z.len() < needed {
        return Err(RepairError::TooShort { len: z.len(), needed });
    }
    let m = p.max(q);
    let n = z.len();
    let init = (z.iter().sum::<f64>() / n as f64 + 1.0).ln();
    let rows = n - m;
    let mut names = vec!["(Intercept)".to_string()];
    names.extend((1..=p).map(|k| format!("lag_z{k}")));
    names.extend((1..=q).map(|l| format!("lag_nu{l}")));

    let mut nu = vec![init; n];
    let mut prev_dev = f64::INFINITY;
    let mut iterations = 0;
    let max_outer = if q == 0 { 1 } else { opts.max_iter };
    // q > 0 starts from the q = 0 fit so the lagged-mean columns vary
    let mut use_nu = false;
    loop {
        iterations += 1;
        let qq = if use_nu { q } else { 0 };
        let design = Matrix::from_fn(rows, 1 + p + qq, |i, j| {
            let t = m + i;
            if j == 0 {
                1.0
            } else if j <= p {
                transform.apply(z[t - j])
            } else {
                nu[t - (j - p)]
            }
        })
        .with_names(names[..1 + p + qq].iter().cloned());
        let reduced = fit_dropping(&design, &z[m..], Family::QuasiPoissonLog, opts)?;
        let c = &reduced.coefficients;
        let beta0 = c[0];
        let beta = c[1..1 + p].to_vec();
        let alpha = if use_nu { c[1 + p..].to_vec() } else { vec![0.0; q] };
        let new_nu = recursion(z, p, q, transform, beta0, &beta, &alpha, init);
        if new_nu.iter().any(|v| !v.is_finite()) {
            return Err(RepairError::Diverged("log-mean recursion overflowed".into()));
        }
        let dev = poisson_deviance(&z[m..], &new_nu[m..]);
        let done = q == 0
            || (use_nu && (prev_dev - dev).abs() / (dev.abs() + 0.1) < opts.tol)
            || iterations >= max_outer;
        if done {
            if q > 0 && iterations >= max_outer && !((prev_dev - dev).abs() / (dev.abs() + 0.1) < opts.tol) {
                return Err(RepairError::NotConverged {
                    iterations,
                    deviance: dev,
                });
            }
            return Ok(IngarchFit {
                p,
                q,
                transform,
                beta0,
                beta,
                alpha,
                nu: new_nu,
                fit: reduced.fit,
                dropped: reduced.dropped,
                iterations,
            });
        }
        prev_dev = dev;
        nu = new_nu;
        use_nu = true;
    }
}

fn poisson_deviance(y: &[f64], nu: &[f64]) -> f64 {
    2.0 * y
        .iter()
        .zip(nu)
        .map(|(&y, &v)| {
            let mu = v.exp();
            let t = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
            t - (y - mu)
        })
        .sum::<f64>()
}

use crate::numerics::{irls_glm, ols_fit, Family, GlmFit, IrlsOptions, Matrix, NumericsError};

/// A fit whose design may have lost columns to rank deficiency.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedFit {
    pub fit: GlmFit,
    /// Coefficients in the original column order; dropped columns are 0.
    pub coefficients: Vec<f64>,
    pub dropped: Vec<String>,
}

/// Fits the design, dropping columns the QR reports as dependent and
/// refitting until the remaining design has full rank.
pub fn fit_dropping(
    design: &Matrix,
    y: &[f64],
    family: Family,
    opts: IrlsOptions,
) -> Result<ReducedFit, NumericsError> {
    let p = design.ncols();
    let mut kept: Vec<usize> = (0..p).collect();
    let mut x = design.clone();
    let mut dropped = Vec::new();
    loop {
        let res = match family {
            Family::GaussianIdentity => ols_fit(&x, y),
            _ => irls_glm(&x, y, family, opts, None),
        };
        match res {
            Ok(fit) => {
                let mut coefficients = vec![0.0; p];
                for (k, &j) in kept.iter().enumerate() {
                    coefficients[j] = fit.coefficients[k];
                }
                return Ok(ReducedFit {
                    fit,
                    coefficients,
                    dropped,
                });
            }
            Err(NumericsError::RankDeficient { column, name }) if x.ncols() > 1 => {
                dropped.push(name);
                kept.remove(column);
                x = x.drop_column(column);
            }
            Err(e) => return Err(e),
        }
    }
}

impl ReducedFit {
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        row.iter()
            .zip(&self.coefficients)
            .map(|(x, b)| if *b == 0.0 { 0.0 } else { x * b })
            .sum()
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let eta = self.linear_predictor(row);
        match self.fit.family {
            Family::GaussianIdentity => eta,
            _ => eta.min(700.0).exp(),
        }
    }
}

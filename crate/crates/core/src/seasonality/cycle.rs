use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::SeasonalityError;
use crate::numerics::{ols_fit, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleMethod {
    Diff7,
    Ma7,
    WeekdayDummies,
    Harmonic,
}

impl CycleMethod {
    fn min_len(self) -> usize {
        match self {
            CycleMethod::Diff7 | CycleMethod::Ma7 => 15,
            _ => 21,
        }
    }
}

/// Output of a cycle-removal transform together with what was removed, so
/// that `head ++ (transformed + removed)` reproduces the input exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRemoval {
    pub method: CycleMethod,
    /// Input values before the first transformed position.
    pub head: Vec<f64>,
    pub transformed: Vec<f64>,
    pub removed: Vec<f64>,
    /// Input values after the last transformed position.
    pub tail: Vec<f64>,
}

impl CycleRemoval {
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = self.head.clone();
        out.extend(self.transformed.iter().zip(&self.removed).map(|(t, r)| t + r));
        out.extend_from_slice(&self.tail);
        out
    }
}

/// Removes the 7-day cycle. `first_weekday` is the weekday (0 = Sunday) of
/// `z[0]`; it only matters for the dummy-variable design.
pub fn remove_weekly_cycle(
    z: &[f64],
    first_weekday: usize,
    method: CycleMethod,
) -> Result<CycleRemoval, SeasonalityError> {
    if z.len() < method.min_len() {
        return Err(SeasonalityError::TooShort {
            len: z.len(),
            needed: method.min_len(),
        });
    }
    let n = z.len();
    Ok(match method {
        CycleMethod::Diff7 => CycleRemoval {
            method,
            head: z[..7].to_vec(),
            transformed: (7..n).map(|t| z[t] - z[t - 7]).collect(),
            removed: z[..n - 7].to_vec(),
            tail: Vec::new(),
        },
        CycleMethod::Ma7 => {
            let ma: Vec<f64> = (3..n - 3)
                .map(|t| z[t - 3..=t + 3].iter().sum::<f64>() / 7.0)
                .collect();
            let removed: Vec<f64> = (3..n - 3).zip(&ma).map(|(t, m)| z[t] - m).collect();
            CycleRemoval {
                method,
                head: z[..3].to_vec(),
                transformed: ma,
                removed,
                tail: z[n - 3..].to_vec(),
            }
        }
        CycleMethod::WeekdayDummies | CycleMethod::Harmonic => {
            let design = if method == CycleMethod::WeekdayDummies {
                Matrix::from_fn(n, 7, |i, j| {
                    let wd = (first_weekday + i) % 7;
                    match j {
                        0 => 1.0,
                        _ => f64::from(wd == j),
                    }
                })
            } else {
                Matrix::from_fn(n, 7, |i, j| {
                    if j == 0 {
                        return 1.0;
                    }
                    let freq = 2.0 * PI * ((j + 1) / 2) as f64 / 7.0;
                    let arg = freq * (first_weekday + i) as f64;
                    if j % 2 == 1 {
                        arg.sin()
                    } else {
                        arg.cos()
                    }
                })
            };
            let fit = ols_fit(&design, z)?;
            CycleRemoval {
                method,
                head: Vec::new(),
                transformed: z.iter().zip(&fit.fitted).map(|(y, f)| y - f).collect(),
                removed: fit.fitted,
                tail: Vec::new(),
            }
        }
    })
}

use serde::{Deserialize, Serialize};

use super::RepairError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationReceipt {
    pub total_before: f64,
    pub total_after: f64,
}

impl ConservationReceipt {
    pub fn holds(&self, rel_tol: f64) -> bool {
        (self.total_before - self.total_after).abs() <= rel_tol * self.total_before.abs().max(1.0)
    }
}

/// Result of moving an outlier's excess mass into its problematic period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Redistribution {
    /// Replacement value actually used (capped at the period total).
    pub z_hat: f64,
    /// Indices of the period, ascending.
    pub period: Vec<usize>,
    /// New values at `period` followed by the new value at the outlier.
    pub repaired_increments: Vec<f64>,
    pub receipt: ConservationReceipt,
    /// The period summed to zero, so the residual was spread evenly.
    pub uniform_fallback: bool,
    /// Some values went negative and were clamped with the mass moved to
    /// the remaining positive days.
    pub clamped: bool,
}

/// Replaces `z[t_m]` by `z_hat` and spreads the residual over `period`
/// in proportion to the existing values, modifying `z` in place.
pub fn redistribute_residual(
    z: &mut [f64],
    t_m: usize,
    z_hat: f64,
    period: &[usize],
) -> Result<Redistribution, RepairError> {
    let mut period: Vec<usize> = period.to_vec();
    period.sort_unstable();
    period.dedup();
    if period.is_empty() {
        return Err(RepairError::EmptyPeriod);
    }
    if t_m >= z.len() || period.iter().any(|&t| t >= z.len()) {
        return Err(RepairError::OutOfRange(t_m.max(*period.last().unwrap())));
    }
    if period.contains(&t_m) {
        return Err(RepairError::PeriodContainsOutlier(t_m));
    }
    let sum: f64 = period.iter().map(|&t| z[t]).sum();
    let total_before = sum + z[t_m];
    // the period cannot absorb more than it holds
    let z_hat = z_hat.max(0.0).min(total_before.max(0.0));
    let residual = z[t_m] - z_hat;

    let mut new: Vec<f64> = period.iter().map(|&t| z[t]).collect();
    let uniform_fallback = !(sum > 0.0);
    if uniform_fallback {
        let share = residual / new.len() as f64;
        for v in &mut new {
            *v += share;
        }
    } else {
        for v in &mut new {
            *v += residual * *v / sum;
        }
    }
    let clamped = clamp_reproportion(&mut new);

    for (&t, &v) in period.iter().zip(&new) {
        z[t] = v;
    }
    z[t_m] = z_hat;
    let total_after = new.iter().sum::<f64>() + z_hat;
    let mut repaired_increments = new;
    repaired_increments.push(z_hat);
    Ok(Redistribution {
        z_hat,
        period,
        repaired_increments,
        receipt: ConservationReceipt {
            total_before,
            total_after,
        },
        uniform_fallback,
        clamped,
    })
}

/// Sets negative entries to zero and takes the removed (negative) mass
/// from the positive entries proportionally, repeating until nothing is
/// negative. Returns whether anything was clamped.
fn clamp_reproportion(v: &mut [f64]) -> bool {
    let mut clamped = false;
    for _ in 0..=v.len() {
        let deficit: f64 = v.iter().filter(|x| **x < 0.0).sum();
        if deficit == 0.0 {
            break;
        }
        clamped = true;
        for x in v.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let pos: f64 = v.iter().filter(|x| **x > 0.0).sum();
        if pos <= 0.0 {
            break;
        }
        let scale = (pos + deficit) / pos;
        for x in v.iter_mut() {
            if *x > 0.0 {
                *x *= scale.max(0.0);
            }
        }
    }
    clamped
}

/// Rounds to integers while keeping the (rounded) total exact, giving the
/// leftover units to the largest fractional parts, earliest first on ties.
pub fn integerize(values: &[f64]) -> Vec<f64> {
    let total = values.iter().sum::<f64>().round();
    let mut out: Vec<f64> = values.iter().map(|v| v.max(0.0).floor()).collect();
    let mut left = (total - out.iter().sum::<f64>()).round() as i64;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = values[a] - values[a].floor();
        let fb = values[b] - values[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut i = 0;
    while left > 0 && !order.is_empty() {
        out[order[i % order.len()]] += 1.0;
        left -= 1;
        i += 1;
    }
    out
}

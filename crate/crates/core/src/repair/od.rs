use crate::model::CumulativeSeries;

/// Backward clamp: the last value is kept and every earlier value is
/// lowered to at most its successor.
pub fn repair_od_values(y: &[f64]) -> Vec<f64> {
    let mut out = y.to_vec();
    for t in (0..out.len().saturating_sub(1)).rev() {
        out[t] = out[t].min(out[t + 1]);
    }
    out
}

pub fn repair_od(y: &CumulativeSeries) -> CumulativeSeries {
    y.with_values(repair_od_values(y.values()))
        .expect("clamped values stay nonnegative")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(repair_od_values(&[1.0, 2.0, 2.0]), vec![1.0, 2.0, 2.0]);
        assert_eq!(repair_od_values(&[1.0, 3.0, 2.0, 4.0]), vec![1.0, 2.0, 2.0, 4.0]);
        assert_eq!(repair_od_values(&[5.0, 4.0, 6.0]), vec![4.0, 4.0, 6.0]);
        assert_eq!(repair_od_values(&[]), Vec::<f64>::new());
    }
}

/// Ranks starting at 1, with tied values sharing the mean of the ranks they
/// span. NaN values sort last.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

/// Sizes of the groups of equal values (singletons included).
pub fn tie_counts(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut counts = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        counts.push(j - i);
        i = j;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(midranks(&[5.0, 1.0, 3.0]), vec![3.0, 1.0, 2.0]);
        assert_eq!(midranks(&[2.0, 2.0, 2.0]), vec![2.0, 2.0, 2.0]);
        assert_eq!(midranks(&[1.0, 2.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(tie_counts(&[1.0, 2.0, 2.0, 4.0]), vec![1, 2, 1]);
    }

    proptest! {
        #[test]
        fn rank_sum_and_range(v in prop::collection::vec(0i32..20, 1..80)) {
            let x: Vec<f64> = v.iter().map(|&a| a as f64).collect();
            let r = midranks(&x);
            let n = x.len() as f64;
            prop_assert!((r.iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
            prop_assert!(r.iter().all(|&q| (1.0..=n).contains(&q)));
            for i in 0..x.len() {
                for j in 0..x.len() {
                    if x[i] < x[j] { prop_assert!(r[i] < r[j]); }
                    if x[i] == x[j] { prop_assert_eq!(r[i], r[j]); }
                }
            }
        }
    }
}

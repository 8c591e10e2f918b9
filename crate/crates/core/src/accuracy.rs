//! Quantile error against ground-truth data.

/// The 21 evenly spaced probabilities `0.01, 0.059, …, 0.99`.
pub fn standard_phis() -> Vec<f64> {
    (0..21).map(|i| 0.01 + 0.049 * i as f64).collect()
}

/// Number of elements of `sorted` strictly less than `t`.
pub fn rank(sorted: &[f64], t: f64) -> usize {
    sorted.partition_point(|&x| x < t)
}

/// Normalized rank error `|rank(q̂) − ⌊φ n⌋| / n`.
pub fn quantile_error(sorted: &[f64], q_hat: f64, phi: f64) -> f64 {
    let n = sorted.len() as f64;
    let target = (phi * n).floor();
    (rank(sorted, q_hat) as f64 - target).abs() / n
}

/// Mean error over `phis` for estimates `q_hats`.
pub fn mean_error(sorted: &[f64], phis: &[f64], q_hats: &[f64]) -> f64 {
    assert_eq!(phis.len(), q_hats.len());
    let total: f64 = phis
        .iter()
        .zip(q_hats)
        .map(|(&p, &q)| quantile_error(sorted, q, p))
        .sum();
    total / phis.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let d: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert!((quantile_error(&d, 504.0, 0.5) - 0.003).abs() < 1e-15);
    }

    #[test]
    fn phis_span() {
        let p = standard_phis();
        assert_eq!(p.len(), 21);
        assert!((p[0] - 0.01).abs() < 1e-15);
        assert!((p[20] - 0.99).abs() < 1e-12);
    }

    #[test]
    fn exact_quantiles_score_zero() {
        let d: Vec<f64> = (0..100).map(f64::from).collect();
        let phis = standard_phis();
        let q: Vec<f64> = phis.iter().map(|p| d[(p * 100.0).floor() as usize]).collect();
        assert_eq!(mean_error(&d, &phis, &q), 0.0);
    }
}

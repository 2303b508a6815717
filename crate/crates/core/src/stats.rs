//! Batch-means helpers.

/// Standard error of the grand mean from equal-weight batch means.
pub fn batch_standard_error(batch_means: &[f64]) -> f64 {
    let n = batch_means.len();
    if n < 2 {
        return 0.0;
    }
    let mean = batch_means.iter().sum::<f64>() / n as f64;
    let var = batch_means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Mean and combined standard error of independent estimates.
pub fn combine_independent(means: &[f64], std_errors: &[f64]) -> (f64, f64) {
    let n = means.len() as f64;
    let mean = means.iter().sum::<f64>() / n;
    let se = std_errors.iter().map(|s| s * s).sum::<f64>().sqrt() / n;
    (mean, se)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_batches_have_zero_error() {
        assert_eq!(batch_standard_error(&[2.0; 10]), 0.0);
    }

    #[test]
    fn known_spread() {
        // sample variance of [1,2,3,4] is 5/3; se = sqrt(5/3 / 4)
        let se = batch_standard_error(&[1.0, 2.0, 3.0, 4.0]);
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        let (m, s) = combine_independent(&[1.0, 3.0], &[0.3, 0.4]);
        assert_eq!(m, 2.0);
        assert!((s - 0.25).abs() < 1e-15);
    }
}

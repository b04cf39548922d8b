//! Order-fixed reductions and confidence intervals.

use statrs::distribution::{Beta, ContinuousCDF, Normal};

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.576;

/// Neumaier-compensated sum, accumulated in slice order.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean and unbiased sample variance, both reduced in index order.
pub fn mean_variance(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(samples.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = compensated_sum(samples.iter().map(|v| (v - mean) * (v - mean)));
    (mean, ss / (n - 1) as f64)
}

/// 99% normal-approximation half-width `2.576 sqrt(var / n)`.
pub fn ci_half_width(variance: f64, n: usize) -> f64 {
    Z99 * (variance / n as f64).sqrt()
}

/// Exact (Clopper-Pearson) interval for a binomial proportion at the given
/// two-sided confidence level.
pub fn clopper_pearson(successes: u64, trials: u64, confidence: f64) -> (f64, f64) {
    assert!(trials > 0 && successes <= trials);
    let alpha = 1.0 - confidence;
    let (k, n) = (successes as f64, trials as f64);
    let lower = if successes == 0 { 0.0 } else { Beta::new(k, n - k + 1.0).unwrap().inverse_cdf(alpha / 2.0) };
    let upper =
        if successes == trials { 1.0 } else { Beta::new(k + 1.0, n - k).unwrap().inverse_cdf(1.0 - alpha / 2.0) };
    (lower, upper)
}

/// Kolmogorov-Smirnov statistic of `samples` against the standard normal.
pub fn ks_standard_normal(samples: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let c = normal.cdf(*x);
            (c - i as f64 / n).max((i + 1) as f64 / n - c)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }

    #[test]
    fn mean_variance_small() {
        let (m, v) = mean_variance(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((v - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(ci_half_width(4.0, 100), 2.576 * 0.2);
    }

    #[test]
    fn clopper_pearson_known_values() {
        let (lo, hi) = clopper_pearson(0, 10, 0.95);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.30849).abs() < 1e-4);
        let (lo, hi) = clopper_pearson(5, 10, 0.95);
        assert!((lo - 0.18709).abs() < 1e-4);
        assert!((hi - 0.81291).abs() < 1e-4);
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| normal.inverse_cdf((i as f64 + 0.5) / n as f64)).collect();
        let d = ks_standard_normal(&xs);
        assert!(d <= 0.5 / n as f64 + 1e-9, "{d}");
    }
}

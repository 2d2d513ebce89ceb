//! Small statistics toolbox used by the estimators and probes.

use serde::Serialize;
use statrs::function::erf::erfc;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; 0 for fewer than two samples.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64
}

pub fn sample_covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let (mx, my) = (mean(xs), mean(ys));
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (n - 1) as f64
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    (mean(xs), (sample_variance(xs) / xs.len() as f64).sqrt())
}

/// `mean(xs) / mean(ys)` with a delta-method standard error.
pub fn ratio_of_means(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let (mx, my) = (mean(xs), mean(ys));
    let r = mx / my;
    let var = (sample_variance(xs) - 2.0 * r * sample_covariance(xs, ys)
        + r * r * sample_variance(ys))
        / (n * my * my);
    (r, var.max(0.0).sqrt())
}

/// Lag-1 sample autocorrelation.
pub fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    if xs.len() < 3 {
        return 0.0;
    }
    let m = mean(xs);
    let denom: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    if denom == 0.0 {
        return 0.0;
    }
    xs.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / denom
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Sup distance between the empirical CDF of `xs` and the standard normal CDF.
pub fn ks_distance_normal(xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov tail `P(D_n > d)` with Stephens' small-sample
/// correction.
pub fn kolmogorov_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Critical KS distance at level `alpha` for `n` samples.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    let sn = (n as f64).sqrt();
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c / (sn + 0.12 + 0.11 / sn)
}

/// Two-sided normal quantile for a central band of mass `level`
/// (e.g. 0.99 -> 2.5758).
pub fn normal_band_z(level: f64) -> f64 {
    // Bisection on the CDF; plenty accurate for band construction.
    let target = 0.5 + level / 2.0;
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub t_stat: f64,
}

/// Weighted least squares with known per-point variances (`w_i = 1 / var_i`).
/// The slope standard error is the model-based one, `sqrt(1 / S_xx)`.
pub fn weighted_linear_fit(x: &[f64], y: &[f64], w: &[f64]) -> LinearFit {
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - mx).powi(2)).sum();
    let sxy: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((a, c), b)| b * (a - mx) * (c - my))
        .sum();
    let syy: f64 = y.iter().zip(w).map(|(c, b)| b * (c - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = (1.0 / sxx).sqrt();
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    LinearFit {
        slope,
        slope_se,
        intercept,
        r_squared,
        t_stat: slope / slope_se,
    }
}

/// Ordinary least squares; slope SE from residuals.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let slope_se = if n > 2.0 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    let r_squared = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    LinearFit {
        slope,
        slope_se,
        intercept,
        r_squared,
        t_stat: slope / slope_se,
    }
}

/// Symmetric binomial band `n*prob ± z*sqrt(n*prob*(1-prob))` on counts.
pub fn binomial_band(n: usize, prob: f64, z: f64) -> (f64, f64) {
    let m = n as f64 * prob;
    let s = (n as f64 * prob * (1.0 - prob)).sqrt();
    (m - z * s, m + z * s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((sample_variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        let (m, se) = mean_se(&[2.0; 10]);
        assert_eq!((m, se), (2.0, 0.0));
    }

    #[test]
    fn ratio_example() {
        let (r, se) = ratio_of_means(&[1.0, 3.0], &[2.0, 4.0]);
        assert!((r - 4.0 / 6.0).abs() < 1e-15);
        assert!(se >= 0.0);
        let (r, se) = ratio_of_means(&[1.0; 5], &[1.0; 5]);
        assert_eq!((r, se), (1.0, 0.0));
    }

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        let c = normal_cdf(1.959963984540054);
        assert!((c - 0.975).abs() < 1e-9, "{c}");
        assert!((normal_band_z(0.99) - 2.5758293035489).abs() < 1e-9);
    }

    #[test]
    fn kolmogorov_tail() {
        // P(K > 1.36) ≈ 0.0494, P(K > 1.63) ≈ 0.0098 for the limiting law.
        assert!((kolmogorov_pvalue(1.36 / 1e4, 100_000_000) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_pvalue(1.63 / 1e4, 100_000_000) - 0.0098).abs() < 1e-3);
        let n = 1000;
        assert!((kolmogorov_pvalue(ks_critical(n, 0.01), n) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn fits() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let f = linear_fit(&x, &y);
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let g = weighted_linear_fit(&x, &y, &[1.0, 2.0, 3.0, 4.0]);
        assert!((g.slope - 2.0).abs() < 1e-12);
    }

    #[test]
    fn autocorrelation_of_alternating_sequence() {
        let xs: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(lag1_autocorrelation(&xs) < -0.9);
    }
}

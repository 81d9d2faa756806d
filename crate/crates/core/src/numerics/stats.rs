//! Small sample-statistics toolkit used by the estimators and tests.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// A sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self { mean: f64::NAN, std_error: f64::NAN, n };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std_error, n }
    }

    pub fn ci95(&self) -> (f64, f64) {
        (self.mean - Z95 * self.std_error, self.mean + Z95 * self.std_error)
    }

    /// True when `value` lies inside `mean ± k·std_error`.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[derive(Debug, Clone, Copy)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
}

/// Ordinary least squares `y = intercept + slope·x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    let n = xs.len();
    if n != ys.len() || n < 3 {
        return Err(Error::State(format!("linear fit needs ≥ 3 paired points, got {n}")));
    }
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::State("linear fit with zero spread in x".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let slope_std_error = (rss / (n - 2) as f64 / sxx).sqrt();
    Ok(LinearFit { slope, intercept, slope_std_error })
}

/// Pearson correlation with a 95% Fisher-z confidence interval.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Correlation {
    pub rho: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: usize,
}

impl Correlation {
    pub fn excludes_zero(&self) -> bool {
        self.ci_lo > 0.0 || self.ci_hi < 0.0
    }
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Correlation> {
    let n = xs.len();
    if n != ys.len() || n < 4 {
        return Err(Error::State(format!("correlation needs ≥ 4 paired samples, got {n}")));
    }
    let mx = mean(xs);
    let my = mean(ys);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::State("correlation of a constant sample".into()));
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let z = rho.clamp(-0.999_999_999, 0.999_999_999).atanh();
    let half = Z95 / ((n - 3) as f64).sqrt();
    Ok(Correlation { rho, ci_lo: (z - half).tanh(), ci_hi: (z + half).tanh(), n })
}

/// Empirical `P(X > t)` for each `t` in `grid`.
pub fn empirical_ccdf(samples: &[f64], grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(Error::State("empirical CCDF of an empty sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(grid
        .iter()
        .map(|&t| {
            let at_or_below = sorted.partition_point(|&x| x <= t);
            (t, (sorted.len() - at_or_below) as f64 / n)
        })
        .collect())
}

pub fn quantile(samples: &[f64], q: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = (q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64).round() as usize;
    sorted[pos]
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

impl KsTest {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value > alpha
    }
}

/// Asymptotic Kolmogorov survival function `P(K > x)`.
fn kolmogorov_sf(x: f64) -> f64 {
    if x < 0.18 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<KsTest> {
    if samples.is_empty() {
        return Err(Error::State("KS test on an empty sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let c = cdf(x);
        d = d.max((i + 1) as f64 / n - c).max(c - i as f64 / n);
    }
    let sn = n.sqrt();
    let p_value = kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d);
    Ok(KsTest { statistic: d, p_value, n: sorted.len() })
}

pub fn ks_exponential(samples: &[f64], mean: f64) -> Result<KsTest> {
    ks_test(samples, |x| if x <= 0.0 { 0.0 } else { -(-x / mean).exp_m1() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ccdf_direct_count() {
        let c = empirical_ccdf(&[1.0, 2.0, 3.0], &[0.0, 1.5, 2.5]).unwrap();
        let v: Vec<f64> = c.iter().map(|p| p.1).collect();
        assert_eq!(v, vec![1.0, 2.0 / 3.0, 1.0 / 3.0]);
        assert!(empirical_ccdf(&[], &[0.0]).is_err());
    }

    #[test]
    fn linear_fit_recovers_line() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x).collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12 && (fit.intercept - 3.0).abs() < 1e-12);
        assert!(fit.slope_std_error < 1e-12);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Classical 5% critical point of the limiting distribution.
        assert!((kolmogorov_sf(1.358_1) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.627_6) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn pearson_perfect_and_ci() {
        let xs: Vec<f64> = (0..50).map(f64::from).collect();
        let c = pearson(&xs, &xs).unwrap();
        assert!((c.rho - 1.0).abs() < 1e-12 && c.excludes_zero());
    }
}

//! Small statistics toolbox: moment accumulators, binomial intervals,
//! goodness-of-fit statistics, and least squares, shared by the estimators
//! and the experiment runner.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Mergeable mean/variance accumulator. Merging is exact over the summed
/// moments, so replica aggregation in index order is schedule-independent.
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Binomial point estimate with Wilson interval at `z` standard deviations.
#[derive(Debug, Clone, Copy)]
pub struct WilsonInterval {
    pub p_hat: f64,
    pub lo: f64,
    pub hi: f64,
}

pub fn wilson(successes: u64, n: u64, z: f64) -> WilsonInterval {
    assert!(n > 0);
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * ((p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt()) / denom;
    WilsonInterval { p_hat: p, lo: (center - half).max(0.0), hi: (center + half).min(1.0) }
}

/// Plain binomial standard error `sqrt(p(1-p)/n)`.
pub fn binomial_stderr(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// Two-sided Kolmogorov-Smirnov distance of a sample against a continuous
/// CDF.
pub fn ks_statistic(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sample.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sample.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n);
        d = d.max((i + 1) as f64 / n - f);
    }
    d
}

/// Result of a chi-squared goodness-of-fit test.
#[derive(Debug, Clone, Copy)]
pub struct ChiSquaredTest {
    pub statistic: f64,
    pub dof: u64,
    pub p_value: f64,
}

/// Pearson chi-squared test of observed counts against expected counts
/// (which must sum to the same total). Cells with tiny expectation are
/// pooled into their neighbor to keep the asymptotic regime honest.
pub fn chi_squared_test(observed: &[u64], expected: &[f64]) -> ChiSquaredTest {
    assert_eq!(observed.len(), expected.len());
    // Pool cells with expected count below 5.
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut acc_obs = 0.0;
    let mut acc_exp = 0.0;
    for (&o, &e) in observed.iter().zip(expected) {
        acc_obs += o as f64;
        acc_exp += e;
        if acc_exp >= 5.0 {
            pooled.push((acc_obs, acc_exp));
            acc_obs = 0.0;
            acc_exp = 0.0;
        }
    }
    if acc_exp > 0.0 {
        if let Some(last) = pooled.last_mut() {
            last.0 += acc_obs;
            last.1 += acc_exp;
        } else {
            pooled.push((acc_obs, acc_exp));
        }
    }
    let statistic: f64 =
        pooled.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = pooled.len().saturating_sub(1).max(1) as u64;
    let chi = ChiSquared::new(dof as f64).unwrap();
    let p_value = 1.0 - chi.cdf(statistic);
    ChiSquaredTest { statistic, dof, p_value }
}

/// Least-squares line fit `y = slope * x + intercept` with RMS residual.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub rms_residual: f64,
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> LineFit {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2);
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();
    LineFit { slope, intercept, rms_residual: rms }
}

//! Small statistics helpers for the Monte Carlo harnesses.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// z-score of a two-sided 99% normal interval.
pub const Z99: f64 = 2.575_829_303_548_901;

/// Summary of a sample of estimates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StatReport {
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub trials: usize,
    pub standard_error: f64,
}

impl StatReport {
    pub fn from_samples(samples: &[f64]) -> StatReport {
        let trials = samples.len();
        let (mean, variance) = mean_variance(samples);
        StatReport {
            mean,
            variance,
            trials,
            standard_error: (variance / trials as f64).sqrt(),
        }
    }

    /// `|mean − target| ≤ z · standard_error`.
    pub fn within(&self, target: f64, z: f64) -> bool {
        (self.mean - target).abs() <= z * self.standard_error
    }

    /// Relative standard error `sqrt(E(x − n)²)/n` against the true value.
    pub fn relative_error(samples: &[f64], truth: f64) -> f64 {
        let mse = samples.iter().map(|x| (x - truth).powi(2)).sum::<f64>() / samples.len() as f64;
        mse.sqrt() / truth
    }
}

/// Sample mean and unbiased variance (Welford).
pub fn mean_variance(samples: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let var = if samples.len() > 1 {
        m2 / (samples.len() - 1) as f64
    } else {
        0.0
    };
    (mean, var)
}

/// Wilson score interval for `successes / trials`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Upper end of a `z`-sigma binomial band around `p` with `trials` draws.
pub fn binomial_upper(p: f64, trials: usize, z: f64) -> f64 {
    p + z * (p * (1.0 - p) / trials as f64).sqrt()
}

/// Two-sample Kolmogorov–Smirnov statistic and its asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    if lambda < 0.2 {
        return (d, 1.0);
    }
    // Kolmogorov distribution tail
    let mut p = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    (d, p.clamp(0.0, 1.0))
}

/// Upper-tail probability of a chi-square variable with `dof` degrees of freedom.
pub fn chi_square_sf(statistic: f64, dof: usize) -> f64 {
    ChiSquared::new(dof as f64)
        .map(|d| d.sf(statistic))
        .unwrap_or(f64::NAN)
}

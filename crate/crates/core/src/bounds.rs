//! Closed-form `δ` for plain sketches released under a budget `ε`.
//!
//! `δ` bounds the probability that the final state has `π ≥ π0`. Every bound
//! is clamped to `[0, 1]` and carries a validity flag; an invalid bound
//! always reports `δ = 1`.

use serde::Serialize;

use crate::dp::{derive_params, pi0};
use crate::error::{Result, SketchError};
use crate::sketch::SketchConfig;
use crate::sketches::hll::alpha;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DeltaMethod {
    HllUnion,
    Fm85Union,
    BottomKExact,
    BottomKBernstein,
    LpcaGeometric,
    AdaptiveViaBottomK,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeltaBound {
    pub delta: f64,
    pub valid: bool,
    pub method: DeltaMethod,
    pub n0: u64,
    /// Bernstein-type tail, reported alongside the exact Bottom-k value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bernstein: Option<f64>,
}

impl DeltaBound {
    fn new(delta: f64, valid: bool, method: DeltaMethod, n0: u64) -> DeltaBound {
        DeltaBound {
            delta: if valid { clamp01(delta) } else { 1.0 },
            valid,
            method,
            n0,
            bernstein: None,
        }
    }
}

fn clamp01(x: f64) -> f64 {
    if x.is_nan() {
        1.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

fn n0_for(kmax: u64, epsilon: f64) -> Result<u64> {
    Ok(derive_params(epsilon, &SketchConfig::BottomK { k: kmax as usize })?.n0)
}

/// `min(1, k·e^{−π0·n/k})`.
pub fn delta_hll(k: usize, epsilon: f64, n: u64) -> Result<DeltaBound> {
    let n0 = n0_for(k as u64, epsilon)?;
    let kf = k as f64;
    let delta = kf * (-pi0(epsilon) * n as f64 / kf).exp();
    Ok(DeltaBound::new(delta, n >= n0, DeltaMethod::HllUnion, n0))
}

/// Number of halvings `v = ⌈−log2 π0⌉`, snapped at exact powers of two.
pub fn fm85_levels(epsilon: f64) -> u32 {
    let x = -pi0(epsilon).log2();
    let r = x.round();
    let v = if (x - r).abs() <= 1e-9 { r } else { x.ceil() };
    v.max(0.0) as u32
}

/// `min(1, k·v·e^{−2^{−v}·n/k})` with `v = ⌈−log2 π0⌉`.
pub fn delta_fm85(k: usize, bitmap_len: u8, epsilon: f64, n: u64) -> Result<DeltaBound> {
    let n0 = n0_for(k as u64 * bitmap_len as u64, epsilon)?;
    let v = fm85_levels(epsilon);
    let kf = k as f64;
    let delta = kf * v as f64 * (-(-(v as f64)).exp2() * n as f64 / kf).exp();
    Ok(DeltaBound::new(delta, n >= n0, DeltaMethod::Fm85Union, n0))
}

/// `P(X ≤ k)` for `X ~ Binomial(n, p)`, summed in log space.
pub fn binomial_cdf(k: u64, n: u64, p: f64) -> f64 {
    if k >= n || p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0;
    }
    let ln_q = (-p).ln_1p();
    let ratio = p.ln() - ln_q;
    let mut log_term = n as f64 * ln_q;
    let mut log_sum = log_term;
    for j in 0..k {
        log_term += ((n - j) as f64).ln() - ((j + 1) as f64).ln() + ratio;
        let (hi, lo) = if log_term > log_sum {
            (log_term, log_sum)
        } else {
            (log_sum, log_term)
        };
        log_sum = hi + (lo - hi).exp().ln_1p();
    }
    log_sum.exp().min(1.0)
}

/// `α_n = ½(π0 − k/n)² / (π0(1−π0) + 1/(3n²))`.
pub fn bernstein_alpha(k: usize, epsilon: f64, n: u64) -> f64 {
    let p = pi0(epsilon);
    let nf = n as f64;
    let gap = p - k as f64 / nf;
    0.5 * gap * gap / (p * (1.0 - p) + 1.0 / (3.0 * nf * nf))
}

/// `e^{−n·α_n}` when `n·π0 > k`, else 1.
pub fn bernstein_tail(k: usize, epsilon: f64, n: u64) -> f64 {
    if n as f64 * pi0(epsilon) <= k as f64 {
        return 1.0;
    }
    clamp01((-(n as f64) * bernstein_alpha(k, epsilon, n)).exp())
}

/// Exact `P(X ≤ k)`, `X ~ Binomial(n, π0)`; the Bernstein tail rides along.
pub fn delta_bottomk(k: usize, epsilon: f64, n: u64) -> Result<DeltaBound> {
    let n0 = n0_for(k as u64, epsilon)?;
    let mut b = DeltaBound::new(
        binomial_cdf(k as u64, n, pi0(epsilon)),
        n >= n0,
        DeltaMethod::BottomKExact,
        n0,
    );
    b.bernstein = Some(bernstein_tail(k, epsilon, n));
    Ok(b)
}

/// The Bernstein tail alone.
pub fn delta_bottomk_bernstein(k: usize, epsilon: f64, n: u64) -> Result<DeltaBound> {
    let n0 = n0_for(k as u64, epsilon)?;
    Ok(DeltaBound::new(
        bernstein_tail(k, epsilon, n),
        n >= n0,
        DeltaMethod::BottomKBernstein,
        n0,
    ))
}

/// Constants of the LPCA bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LpcaTerms {
    /// `⌈k(1 − π0/p)⌉`, at least 1.
    pub b0: u64,
    /// `b0/k`.
    pub pi_tilde0: f64,
    /// `Σ_{i<b0} 1/(p(1 − i/k))`: expected items to fill `b0` bits.
    pub mu0: f64,
}

pub fn lpca_terms(k: usize, p: f64, epsilon: f64) -> LpcaTerms {
    let kf = k as f64;
    let b0 = ((kf * (1.0 - pi0(epsilon) / p)).ceil().max(1.0) as u64).min(k as u64);
    let mu0 = (0..b0).map(|i| 1.0 / (p * (1.0 - i as f64 / kf))).sum();
    LpcaTerms {
        b0,
        pi_tilde0: b0 as f64 / kf,
        mu0,
    }
}

/// `0` when `p < π0`; otherwise `(μ0/n)·e^{−π̃0(n/μ0 − 1)}`, valid for `n > μ0`.
pub fn delta_lpca(k: usize, p: f64, epsilon: f64, n: u64) -> Result<DeltaBound> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(SketchError::InvalidConfig(format!("LPCA rate p = {p} outside (0, 1]")));
    }
    let n0 = n0_for(k as u64, epsilon)?;
    if p < pi0(epsilon) {
        return Ok(DeltaBound::new(0.0, n >= n0, DeltaMethod::LpcaGeometric, n0));
    }
    let t = lpca_terms(k, p, epsilon);
    let nf = n as f64;
    let delta = (t.mu0 / nf) * (-t.pi_tilde0 * (nf / t.mu0 - 1.0)).exp();
    Ok(DeltaBound::new(
        delta,
        nf > t.mu0 && n >= n0,
        DeltaMethod::LpcaGeometric,
        n0,
    ))
}

/// Same value as Bottom-k with the same `k`.
pub fn delta_adaptive(k: usize, epsilon: f64, n: u64) -> Result<DeltaBound> {
    let mut b = delta_bottomk(k, epsilon, n)?;
    b.method = DeltaMethod::AdaptiveViaBottomK;
    Ok(b)
}

/// Dispatches on the configuration's family.
pub fn delta_for(config: &SketchConfig, epsilon: f64, n: u64) -> Result<DeltaBound> {
    config.validate()?;
    match *config {
        SketchConfig::Hll { k, .. } => delta_hll(k, epsilon, n),
        SketchConfig::Fm85 { k, bitmap_len } => delta_fm85(k, bitmap_len, epsilon, n),
        SketchConfig::BottomK { k } => delta_bottomk(k, epsilon, n),
        SketchConfig::Lpca { k, p } => delta_lpca(k, p, epsilon, n),
        SketchConfig::AdaptiveSampling { k } => delta_adaptive(k, epsilon, n),
    }
}

/// Estimate value `Ñ(π0)` below which a state has `π ≥ π0`.
///
/// Defined only where the estimator is a strictly decreasing function of `π`.
pub fn estimator_threshold(config: &SketchConfig, epsilon: f64) -> Result<f64> {
    let p0 = pi0(epsilon);
    match *config {
        SketchConfig::BottomK { k } => Ok((k as f64 - 1.0) / p0),
        SketchConfig::Lpca { k, p } => {
            let t = lpca_terms(k, p, epsilon);
            Ok(-(k as f64 / p) * (-t.pi_tilde0).ln_1p())
        }
        SketchConfig::Hll { k, .. } => {
            let threshold = alpha(k) * k as f64 / p0;
            if threshold <= 2.5 * k as f64 {
                Err(SketchError::Unsupported(format!(
                    "HLL threshold {threshold:.1} lies in the small-range regime"
                )))
            } else {
                Ok(threshold)
            }
        }
        SketchConfig::Fm85 { .. } | SketchConfig::AdaptiveSampling { .. } => {
            Err(SketchError::Unsupported(format!(
                "{} estimates are not a function of the sampling probability",
                config.family()
            )))
        }
    }
}

/// Fraction of `estimates` strictly below the estimator threshold.
pub fn delta_via_estimator_threshold(
    config: &SketchConfig,
    epsilon: f64,
    estimates: &[f64],
) -> Result<f64> {
    let threshold = estimator_threshold(config, epsilon)?;
    if estimates.is_empty() {
        return Ok(0.0);
    }
    let below = estimates.iter().filter(|&&x| x < threshold).count();
    Ok(below as f64 / estimates.len() as f64)
}

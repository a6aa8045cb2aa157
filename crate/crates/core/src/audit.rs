//! Monte Carlo checks of the privacy and accuracy claims.
//!
//! Trial `t` of a run seeded with `master` uses the hash seed
//! `master.derive(t)`, so every report is reproducible from one seed.
//! Streams are `D = {1, …, n}` with items encoded as little-endian `u64`.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::dp::{self, derive_params, Pipeline};
use crate::error::{Result, SketchError};
use crate::format::payload_bytes;
use crate::hashing::{HashRole, Seed};
use crate::sketch::{SketchConfig, SketchState};
use crate::sketches::Registers;
use crate::stats::{wilson_interval, StatReport, Z99};

/// Minimum number of observations of a state, over both data sets, for its
/// ratio to be audited.
pub const MIN_STATE_COUNT: u64 = 50;

/// Largest share of probability mass allowed in sparse states.
pub const MAX_SPARSE_MASS: f64 = 0.01;

/// The stream `{first, …, last}` as item byte strings.
pub fn stream(first: u64, last: u64) -> impl Iterator<Item = [u8; 8]> + Clone {
    (first..=last).map(u64::to_le_bytes)
}

/// Indices of the items whose removal changes the sketch.
pub fn removal_set<T: AsRef<[u8]>>(items: &[T], config: SketchConfig, seed: Seed) -> Result<Vec<usize>> {
    let full = crate::sketch::build(config, seed, items)?;
    let hasher = full.hasher().clone();
    let hashes: Vec<_> = items
        .iter()
        .map(|x| hasher.hash(x.as_ref(), HashRole::SketchHash))
        .collect();
    let mut out = Vec::new();
    for skip in 0..hashes.len() {
        let mut s = SketchState::new(config, seed)?;
        for (i, &h) in hashes.iter().enumerate() {
            if i != skip {
                s.add_hash(h);
            }
        }
        if s != full {
            out.push(skip);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    ConsistentWithDp,
    ViolationDetected,
    Inconclusive,
}

/// A log ratio with its confidence interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogRatio {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Settings of a likelihood-ratio audit.
#[derive(Clone, Copy, Debug)]
pub struct AuditSetup {
    pub config: SketchConfig,
    pub pipeline: Pipeline,
    pub epsilon: f64,
    pub n: u64,
    pub trials: u64,
    pub seed: Seed,
    /// Compare `D` with itself rather than with `D` minus item 1.
    pub self_compare: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    pub epsilon_target: f64,
    pub pipeline: Pipeline,
    pub n: u64,
    pub trials: u64,
    pub max_log_ratio: Option<LogRatio>,
    pub min_log_ratio: Option<LogRatio>,
    pub states_observed: usize,
    pub states_audited: usize,
    /// Share of observations falling in states too rare to audit.
    pub sparse_mass: f64,
    /// States whose whole ratio interval lies outside `[e^{−ε}, e^{ε}]`.
    pub violating_states: usize,
    pub verdict: Verdict,
}

/// Canonical key of a state; Bottom-k style hashes keep their top 8 bits.
pub fn state_key(state: &SketchState) -> Vec<u8> {
    match state.registers() {
        Registers::BottomK(s) => s.values().iter().map(|v| (v >> 56) as u8).collect(),
        Registers::AdaptiveSampling(s) => std::iter::once(s.depth())
            .chain(s.values().iter().map(|v| (v >> 56) as u8))
            .collect(),
        other => payload_bytes(other),
    }
}

fn run_state<I, T>(pipeline: Pipeline, items: I, epsilon: f64, config: SketchConfig, seed: Seed) -> Result<SketchState>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    Ok(dp::run_pipeline(pipeline, items, Some(epsilon), config, seed)?.state)
}

type Counts = HashMap<Vec<u8>, [u64; 2]>;

/// Estimates `Pr(state = s)` under `D` and under `D₋₁` with independent seed
/// streams and compares every well-populated state against `e^{±ε}`.
pub fn audit_dp(setup: &AuditSetup) -> Result<AuditReport> {
    setup.config.validate()?;
    derive_params(setup.epsilon, &setup.config)?;
    if setup.n == 0 || setup.trials == 0 {
        return Err(SketchError::InvalidConfig("audit needs n ≥ 1 and trials ≥ 1".into()));
    }
    let first_neighbour = if setup.self_compare { 1 } else { 2 };
    let trial = |t: u64, counts: &mut Counts| -> Result<()> {
        let a = run_state(
            setup.pipeline,
            stream(1, setup.n),
            setup.epsilon,
            setup.config,
            setup.seed.derive(2 * t),
        )?;
        let b = run_state(
            setup.pipeline,
            stream(first_neighbour, setup.n),
            setup.epsilon,
            setup.config,
            setup.seed.derive(2 * t + 1),
        )?;
        counts.entry(state_key(&a)).or_default()[0] += 1;
        counts.entry(state_key(&b)).or_default()[1] += 1;
        Ok(())
    };
    let counts = (0..setup.trials)
        .into_par_iter()
        .try_fold(Counts::new, |mut acc, t| {
            trial(t, &mut acc)?;
            Ok::<_, SketchError>(acc)
        })
        .try_reduce(Counts::new, |mut a, b| {
            for (key, c) in b {
                let e = a.entry(key).or_default();
                e[0] += c[0];
                e[1] += c[1];
            }
            Ok(a)
        })?;
    Ok(summarize(setup, &counts))
}

fn summarize(setup: &AuditSetup, counts: &Counts) -> AuditReport {
    let trials = setup.trials;
    let (lo_bound, hi_bound) = (-setup.epsilon, setup.epsilon);
    let mut sparse = 0u64;
    let mut audited = 0usize;
    let mut violating = 0usize;
    let mut max: Option<LogRatio> = None;
    let mut min: Option<LogRatio> = None;
    for c in counts.values() {
        if c[0].max(c[1]) < MIN_STATE_COUNT {
            sparse += c[0] + c[1];
            continue;
        }
        audited += 1;
        let (lo_a, hi_a) = wilson_interval(c[0], trials, Z99);
        let (lo_b, hi_b) = wilson_interval(c[1], trials, Z99);
        let r = LogRatio {
            value: (c[0] as f64 / c[1] as f64).ln(),
            lo: (lo_a / hi_b).ln(),
            hi: (hi_a / lo_b).ln(),
        };
        if r.lo > hi_bound || r.hi < lo_bound {
            violating += 1;
        }
        if max.map_or(true, |m| r.value > m.value) {
            max = Some(r);
        }
        if min.map_or(true, |m| r.value < m.value) {
            min = Some(r);
        }
    }
    let sparse_mass = sparse as f64 / (2 * trials) as f64;
    let verdict = if violating > 0 {
        Verdict::ViolationDetected
    } else if audited == 0 || sparse_mass > MAX_SPARSE_MASS {
        Verdict::Inconclusive
    } else {
        Verdict::ConsistentWithDp
    };
    AuditReport {
        epsilon_target: setup.epsilon,
        pipeline: setup.pipeline,
        n: setup.n,
        trials,
        max_log_ratio: max,
        min_log_ratio: min,
        states_observed: counts.len(),
        states_audited: audited,
        sparse_mass,
        violating_states: violating,
        verdict,
    }
}

/// Observed frequency of plain sketches ending with `π ≥ π0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EmpiricalDelta {
    pub violations: u64,
    pub trials: u64,
    pub fraction: f64,
    /// Wilson 99% interval.
    pub lo: f64,
    pub hi: f64,
}

pub fn empirical_delta(
    config: SketchConfig,
    epsilon: f64,
    n: u64,
    trials: u64,
    seed: Seed,
) -> Result<EmpiricalDelta> {
    let pi0 = derive_params(epsilon, &config)?.pi0;
    let violations = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = crate::sketch::build(config, seed.derive(t), stream(1, n))?;
            Ok(u64::from(s.sampling_probability() >= pi0))
        })
        .sum::<Result<u64>>()?;
    let (lo, hi) = wilson_interval(violations, trials, Z99);
    Ok(EmpiricalDelta {
        violations,
        trials,
        fraction: violations as f64 / trials as f64,
        lo,
        hi,
    })
}

/// Corrected estimates of `n` distinct items over `trials` seeds.
pub fn pipeline_estimates(
    pipeline: Pipeline,
    config: SketchConfig,
    epsilon: f64,
    n: u64,
    trials: u64,
    seed: Seed,
) -> Result<Vec<f64>> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let run = dp::run_pipeline(pipeline, stream(1, n), Some(epsilon), config, seed.derive(t))?;
            Ok(run.estimate.value)
        })
        .collect()
}

/// Mean corrected estimate with its standard error.
pub fn unbiasedness_check(
    pipeline: Pipeline,
    config: SketchConfig,
    epsilon: f64,
    n: u64,
    trials: u64,
    seed: Seed,
) -> Result<StatReport> {
    Ok(StatReport::from_samples(&pipeline_estimates(
        pipeline, config, epsilon, n, trials, seed,
    )?))
}

/// Ratio of private to plain estimator variance at the same `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VarianceRatio {
    pub ratio: f64,
    /// 99% interval from the F distribution.
    pub lo: f64,
    pub hi: f64,
    pub private: StatReport,
    pub plain: StatReport,
}

/// Both arms share the per-trial seed, so with `π0 = 1` they coincide.
pub fn variance_ratio_check(
    pipeline: Pipeline,
    config: SketchConfig,
    epsilon: f64,
    n: u64,
    trials: u64,
    seed: Seed,
) -> Result<VarianceRatio> {
    if trials < 3 {
        return Err(SketchError::InvalidConfig("variance ratio needs at least 3 trials".into()));
    }
    let private = StatReport::from_samples(&pipeline_estimates(
        pipeline, config, epsilon, n, trials, seed,
    )?);
    let plain = StatReport::from_samples(&pipeline_estimates(
        Pipeline::Raw,
        config,
        epsilon,
        n,
        trials,
        seed,
    )?);
    let ratio = private.variance / plain.variance;
    let dof = (trials - 1) as f64;
    let f = FisherSnedecor::new(dof, dof).expect("positive degrees of freedom");
    let alpha = 0.01;
    Ok(VarianceRatio {
        ratio,
        lo: ratio / f.inverse_cdf(1.0 - alpha / 2.0),
        hi: ratio / f.inverse_cdf(alpha / 2.0),
        private,
        plain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::Family;

    #[test]
    fn removal_set_bottomk_matches_sorted_hashes() {
        let seed = Seed::from_u64(8);
        let items: Vec<[u8; 8]> = stream(1, 10).collect();
        let hasher = crate::hashing::ItemHasher::new(&seed);
        let mut order: Vec<(u64, usize)> = items
            .iter()
            .enumerate()
            .map(|(i, x)| (hasher.hash(x, HashRole::SketchHash).0, i))
            .collect();
        order.sort_unstable();
        let mut expected: Vec<usize> = order[..4].iter().map(|&(_, i)| i).collect();
        expected.sort_unstable();
        assert_eq!(removal_set(&items, SketchConfig::bottom_k(4), seed).unwrap(), expected);
    }

    #[test]
    fn removal_set_single_item() {
        for family in Family::ALL {
            let items = [b"only".to_vec()];
            let r = removal_set(&items, SketchConfig::with_family(family, 4), Seed::from_u64(1));
            assert_eq!(r.unwrap(), vec![0]);
        }
    }

    #[test]
    fn self_comparison_is_consistent() {
        let setup = AuditSetup {
            config: SketchConfig::lpca(4),
            pipeline: Pipeline::LargeSet,
            epsilon: 2f64.ln(),
            n: 16,
            trials: 20_000,
            seed: Seed::from_u64(77),
            self_compare: true,
        };
        let r = audit_dp(&setup).unwrap();
        assert_eq!(r.verdict, Verdict::ConsistentWithDp);
        let max = r.max_log_ratio.unwrap();
        let min = r.min_log_ratio.unwrap();
        assert!(max.lo <= 0.0 && min.hi >= 0.0);
    }

    #[test]
    fn bottomk_underfull_always_violates() {
        let d = empirical_delta(SketchConfig::bottom_k(16), 2f64.ln(), 16, 200, Seed::from_u64(1)).unwrap();
        assert_eq!(d.violations, 200);
    }

    #[test]
    fn degenerate_variance_ratio_is_one() {
        let r = variance_ratio_check(
            Pipeline::LargeSet,
            SketchConfig::bottom_k(16),
            50.0,
            500,
            50,
            Seed::from_u64(3),
        )
        .unwrap();
        assert_eq!(r.ratio, 1.0);
    }
}

//! Privacy wrappers around the base sketches.
//!
//! Every wrapper keeps the raw sketch intact and reports the correction
//! separately in a [`DpEstimate`]: downsampled pipelines divide by the
//! acceptance rate `π0`, phantom-seeded pipelines subtract the phantom count.
//!
//! | pipeline    | acceptance | phantoms                         | estimate        |
//! |-------------|------------|----------------------------------|-----------------|
//! | `Raw`       | 1          | none                             | `N̂`             |
//! | `Base`      | 1          | none                             | `N̂`             |
//! | `LargeSet`  | `π0`       | none                             | `N̂/π0`          |
//! | `AnySet`    | `π0`       | `n0`, gated like real items      | `N̂/π0 − n0`     |
//! | `MakeDp`    | 1          | `v ≥ n0` until `π ≤ π0`, ungated | `N̂ − v`         |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SketchError};
use crate::hashing::{HashRole, ItemHasher, Namespace, Seed};
use crate::sketch::{SketchConfig, SketchState};

/// Budget-derived constants for one sketch configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    /// `1 − e^{−ε}`.
    pub pi0: f64,
    pub kmax: u64,
    /// `⌈kmax/π0⌉`.
    pub n0: u64,
}

/// Largest `n0` accepted; beyond this no phantom loop is practical.
const MAX_N0: f64 = (1u64 << 40) as f64;

/// `1 − e^{−ε}` without cancellation for small `ε`.
pub fn pi0(epsilon: f64) -> f64 {
    -(-epsilon).exp_m1()
}

pub fn derive_params(epsilon: f64, config: &SketchConfig) -> Result<PrivacyParams> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(SketchError::InvalidEpsilon(epsilon));
    }
    let pi0 = pi0(epsilon);
    let kmax = config.kmax();
    let ratio = kmax as f64 / pi0;
    if ratio > MAX_N0 {
        return Err(SketchError::InvalidEpsilon(epsilon));
    }
    // ln 2 gives π0 = 0.5 only up to rounding; snap near-integers first.
    let nearest = ratio.round();
    let n0 = if (ratio - nearest).abs() <= 1e-9 * nearest {
        nearest
    } else {
        ratio.ceil()
    };
    Ok(PrivacyParams {
        epsilon,
        pi0,
        kmax,
        n0: n0 as u64,
    })
}

/// How a sketch was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    /// Plain sketch with no privacy claim.
    Raw,
    /// Plain sketch released under the approximate guarantee.
    Base,
    LargeSet,
    AnySet,
    #[serde(rename = "makedp")]
    MakeDp,
}

impl Pipeline {
    pub const ALL: [Pipeline; 5] = [
        Pipeline::Raw,
        Pipeline::Base,
        Pipeline::LargeSet,
        Pipeline::AnySet,
        Pipeline::MakeDp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Raw => "raw",
            Pipeline::Base => "base",
            Pipeline::LargeSet => "large-set",
            Pipeline::AnySet => "any-set",
            Pipeline::MakeDp => "makedp",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Pipeline::Raw => 0,
            Pipeline::Base => 1,
            Pipeline::LargeSet => 2,
            Pipeline::AnySet => 3,
            Pipeline::MakeDp => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Pipeline> {
        Pipeline::ALL.into_iter().find(|p| p.tag() == tag)
    }

    /// Whether the pipeline downsamples items at `π0`.
    pub fn downsamples(self) -> bool {
        matches!(self, Pipeline::LargeSet | Pipeline::AnySet)
    }

    /// Whether the released state already carries a pure guarantee.
    pub fn is_private(self) -> bool {
        matches!(self, Pipeline::LargeSet | Pipeline::AnySet | Pipeline::MakeDp)
    }

    pub fn needs_epsilon(self) -> bool {
        self != Pipeline::Raw
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pipeline {
    type Err = SketchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "raw" => Ok(Pipeline::Raw),
            "base" | "1a" => Ok(Pipeline::Base),
            "large-set" | "large" | "1b" => Ok(Pipeline::LargeSet),
            "any-set" | "any" | "1c" => Ok(Pipeline::AnySet),
            "makedp" | "make-dp" => Ok(Pipeline::MakeDp),
            other => Err(SketchError::InvalidConfig(format!("unknown pipeline '{other}'"))),
        }
    }
}

/// A corrected estimate together with the terms it was computed from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DpEstimate {
    /// May be negative for phantom-corrected pipelines.
    pub value: f64,
    pub base_estimate: f64,
    /// Acceptance rate applied to items.
    pub p: f64,
    /// Phantom items inserted.
    pub v: u64,
    pub algorithm: Pipeline,
}

impl DpEstimate {
    /// Builds the estimate from its terms; `value = base/p − v`.
    pub fn compose(algorithm: Pipeline, base_estimate: f64, p: f64, v: u64) -> DpEstimate {
        DpEstimate {
            value: base_estimate / p - v as f64,
            base_estimate,
            p,
            v,
            algorithm,
        }
    }

    /// Checks the decomposition holds bit-exactly.
    pub fn is_consistent(&self) -> bool {
        let recomputed = self.base_estimate / self.p - self.v as f64;
        let shape = match self.algorithm {
            Pipeline::Raw | Pipeline::Base => self.p == 1.0 && self.v == 0,
            Pipeline::LargeSet => self.v == 0,
            Pipeline::AnySet => true,
            Pipeline::MakeDp => self.p == 1.0,
        };
        shape && recomputed.to_bits() == self.value.to_bits()
    }
}

/// Privacy status of a released state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PrivacyStatus {
    /// No claim was requested.
    NotPrivate,
    /// Pure guarantee holds for the pipeline.
    Pure,
    /// Plain sketch whose final `π` is below `π0`: only the approximate
    /// guarantee applies.
    Approximate,
    /// Plain sketch whose final `π` is at least `π0`.
    PureDpNotGuaranteed,
    /// Downsampled sketch whose estimate suggests fewer than `n0` items.
    LikelyBelowN0,
}

/// Result of running a pipeline.
#[derive(Clone, Debug)]
pub struct DpRun {
    pub state: SketchState,
    pub estimate: DpEstimate,
    pub params: Option<PrivacyParams>,
    pub status: PrivacyStatus,
}

/// Configuration actually used for the sketch under `pipeline`.
///
/// LPCA in a downsampled pipeline runs with rate 1 so that the only sampling
/// layer is the `π0` gate.
pub fn effective_config(config: SketchConfig, pipeline: Pipeline) -> SketchConfig {
    match config {
        SketchConfig::Lpca { k, .. } if pipeline.downsamples() => SketchConfig::Lpca { k, p: 1.0 },
        other => other,
    }
}

/// `unit(DownsampleHash(item)) < π0`.
#[inline]
pub fn passes_gate(hasher: &ItemHasher, item: &[u8], pi0: f64) -> bool {
    hasher.hash(item, HashRole::DownsampleHash).unit() < pi0
}

#[inline]
fn phantom_passes_gate(hasher: &ItemHasher, ns: Namespace, counter: u64, pi0: f64) -> bool {
    hasher.hash_phantom(ns, counter, HashRole::DownsampleHash).unit() < pi0
}

fn add_gated<I, T>(state: &mut SketchState, items: I, pi0: f64)
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    let hasher = state.hasher().clone();
    for item in items {
        let item = item.as_ref();
        if passes_gate(&hasher, item, pi0) {
            state.add(item);
        }
    }
}

/// Base estimate of `state`; a saturated LPCA bitmap estimates `+∞`.
pub fn base_estimate(state: &SketchState) -> Result<f64> {
    match state.estimate() {
        Err(SketchError::Saturated) => Ok(f64::INFINITY),
        other => other,
    }
}

/// Plain build released with its approximate guarantee.
pub fn run_base<I, T>(items: I, epsilon: f64, config: SketchConfig, seed: Seed) -> Result<DpRun>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    let params = derive_params(epsilon, &config)?;
    let state = crate::sketch::build(config, seed, items)?;
    let base = base_estimate(&state)?;
    let status = if state.sampling_probability() >= params.pi0 {
        PrivacyStatus::PureDpNotGuaranteed
    } else {
        PrivacyStatus::Approximate
    };
    Ok(DpRun {
        estimate: DpEstimate::compose(Pipeline::Base, base, 1.0, 0),
        state,
        params: Some(params),
        status,
    })
}

/// Downsampled build for streams known to exceed `n0` distinct items.
pub fn run_large_set<I, T>(
    items: I,
    epsilon: f64,
    config: SketchConfig,
    seed: Seed,
) -> Result<DpRun>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    let config = effective_config(config, Pipeline::LargeSet);
    let params = derive_params(epsilon, &config)?;
    let mut state = SketchState::new(config, seed)?;
    add_gated(&mut state, items, params.pi0);
    let estimate = DpEstimate::compose(Pipeline::LargeSet, base_estimate(&state)?, params.pi0, 0);
    let status = if estimate.value < params.n0 as f64 {
        PrivacyStatus::LikelyBelowN0
    } else {
        PrivacyStatus::Pure
    };
    Ok(DpRun {
        state,
        estimate,
        params: Some(params),
        status,
    })
}

/// Empty sketch seeded with `n0` phantoms, each kept with probability `π0`.
/// Returns the state and `v = n0`.
pub fn dp_init_sketch(epsilon: f64, config: SketchConfig, seed: Seed) -> Result<(SketchState, u64)> {
    let config = effective_config(config, Pipeline::AnySet);
    let params = derive_params(epsilon, &config)?;
    let mut state = SketchState::new(config, seed)?;
    let hasher = state.hasher().clone();
    for counter in 0..params.n0 {
        if phantom_passes_gate(&hasher, Namespace::InitPhantom, counter, params.pi0) {
            state.add_phantom(Namespace::InitPhantom, counter);
        }
    }
    Ok((state, params.n0))
}

/// Downsampled build with phantom seeding, private for any stream size.
pub fn run_any_set<I, T>(items: I, epsilon: f64, config: SketchConfig, seed: Seed) -> Result<DpRun>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    let (mut state, v) = dp_init_sketch(epsilon, config, seed)?;
    let params = derive_params(epsilon, state.config())?;
    add_gated(&mut state, items, params.pi0);
    let estimate = DpEstimate::compose(Pipeline::AnySet, base_estimate(&state)?, params.pi0, v);
    Ok(DpRun {
        state,
        estimate,
        params: Some(params),
        status: PrivacyStatus::Pure,
    })
}

/// Smallest `π` the family can reach, or `None` when it tends to 0.
fn pi_floor(config: &SketchConfig) -> Option<f64> {
    match *config {
        SketchConfig::Hll { register_width, .. } => {
            Some((-(((1u32 << register_width) - 1) as f64)).exp2())
        }
        _ => None,
    }
}

/// Ungated phantoms until `π ≤ π0` and `v ≥ n0`. Returns the state and `v`.
pub fn dp_init_for_merge(
    epsilon: f64,
    config: SketchConfig,
    seed: Seed,
) -> Result<(SketchState, u64)> {
    let params = derive_params(epsilon, &config)?;
    if let Some(floor) = pi_floor(&config) {
        if floor > params.pi0 {
            return Err(SketchError::Unsupported(format!(
                "sampling probability cannot fall below {floor:e} but pi0 = {:e}",
                params.pi0
            )));
        }
    }
    let mut state = SketchState::new(config, seed)?;
    for counter in 0..params.n0 {
        state.add_phantom(Namespace::MergePhantom, counter);
    }
    let mut v = params.n0;
    while state.sampling_probability() > params.pi0 {
        state.add_phantom(Namespace::MergePhantom, v);
        v += 1;
    }
    Ok((state, v))
}

/// Privatizes an existing sketch by merging it with a merge-initialized
/// sketch of the same configuration and seed.
pub fn make_dp(existing: &SketchState, epsilon: f64) -> Result<DpRun> {
    let params = derive_params(epsilon, existing.config())?;
    let (noise, v) = dp_init_for_merge(epsilon, *existing.config(), *existing.seed())?;
    let state = SketchState::merged(existing, &noise)?;
    let estimate = DpEstimate::compose(Pipeline::MakeDp, base_estimate(&state)?, 1.0, v);
    Ok(DpRun {
        state,
        estimate,
        params: Some(params),
        status: PrivacyStatus::Pure,
    })
}

/// Dispatches a stream pipeline. `MakeDp` builds the plain sketch first.
pub fn run_pipeline<I, T>(
    pipeline: Pipeline,
    items: I,
    epsilon: Option<f64>,
    config: SketchConfig,
    seed: Seed,
) -> Result<DpRun>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    let need = || epsilon.ok_or(SketchError::InvalidEpsilon(f64::NAN));
    match pipeline {
        Pipeline::Raw => {
            let state = crate::sketch::build(config, seed, items)?;
            Ok(DpRun {
                estimate: DpEstimate::compose(Pipeline::Raw, base_estimate(&state)?, 1.0, 0),
                state,
                params: None,
                status: PrivacyStatus::NotPrivate,
            })
        }
        Pipeline::Base => run_base(items, need()?, config, seed),
        Pipeline::LargeSet => run_large_set(items, need()?, config, seed),
        Pipeline::AnySet => run_any_set(items, need()?, config, seed),
        Pipeline::MakeDp => make_dp(&crate::sketch::build(config, seed, items)?, need()?),
    }
}

/// Recomputes the corrected estimate of a stored state.
pub fn estimate_state(
    state: &SketchState,
    pipeline: Pipeline,
    epsilon: Option<f64>,
    v: u64,
) -> Result<DpEstimate> {
    let base = base_estimate(&state)?;
    let p = if pipeline.downsamples() {
        pi0(epsilon.ok_or(SketchError::InvalidEpsilon(f64::NAN))?)
    } else {
        1.0
    };
    Ok(DpEstimate::compose(pipeline, base, p, v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn items(n: u64) -> impl Iterator<Item = [u8; 8]> {
        (0..n).map(u64::to_le_bytes)
    }

    #[test]
    fn params_examples() {
        let p = derive_params(2f64.ln(), &SketchConfig::hll(1024)).unwrap();
        assert_eq!(p.pi0, 0.5);
        assert_eq!(p.n0, 2048);
        let p = derive_params(50.0, &SketchConfig::bottom_k(64)).unwrap();
        assert!(p.pi0 > 1.0 - 1e-15);
        assert_eq!(p.n0, 64);
        let p = derive_params(2f64.ln(), &SketchConfig::fm85(16)).unwrap();
        assert_eq!(p.n0, 1024);
        let p = derive_params(0.1, &SketchConfig::bottom_k(10)).unwrap();
        assert_eq!(p.n0, (10.0 / (1.0 - (-0.1f64).exp())).ceil() as u64);
        assert!(p.n0 >= p.kmax);
        for bad in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(derive_params(bad, &SketchConfig::hll(16)).is_err());
        }
    }

    #[test]
    fn pipeline_names_round_trip() {
        for p in Pipeline::ALL {
            assert_eq!(p.name().parse::<Pipeline>().unwrap(), p);
            assert_eq!(Pipeline::from_tag(p.tag()), Some(p));
            assert_eq!(serde_json::to_string(&p).unwrap(), format!("\"{}\"", p.name()));
        }
    }

    #[test]
    fn estimates_decompose() {
        let seed = Seed::from_u64(3);
        let cfg = SketchConfig::bottom_k(16);
        let eps = 2f64.ln();
        let b = run_large_set(items(500), eps, cfg, seed).unwrap();
        assert!(b.estimate.is_consistent());
        assert_eq!(b.estimate.v, 0);
        assert_eq!(b.estimate.value, b.estimate.base_estimate / 0.5);
        let c = run_any_set(items(500), eps, cfg, seed).unwrap();
        assert!(c.estimate.is_consistent());
        assert_eq!(c.estimate.v, 32);
        let m = make_dp(&crate::sketch::build(cfg, seed, items(500)).unwrap(), eps).unwrap();
        assert!(m.estimate.is_consistent());
        assert!(m.estimate.v >= 32);
        assert_eq!(m.estimate.value, m.estimate.base_estimate - m.estimate.v as f64);
    }

    #[test]
    fn empty_base_is_zero() {
        let r = run_base(items(0), 1.0, SketchConfig::hll(16), Seed::from_u64(1)).unwrap();
        assert_eq!(r.estimate.value, 0.0);
        assert_eq!(r.status, PrivacyStatus::PureDpNotGuaranteed);
    }

    #[test]
    fn gate_decides_membership_exactly() {
        let seed = Seed::from_u64(9);
        let cfg = SketchConfig::bottom_k(1 << 12);
        let eps = 2f64.ln();
        let r = run_large_set(items(1000), eps, cfg, seed).unwrap();
        let hasher = ItemHasher::new(&seed);
        let mut expected: Vec<u64> = items(1000)
            .filter(|x| passes_gate(&hasher, x, 0.5))
            .map(|x| hasher.hash(&x, HashRole::SketchHash).0)
            .collect();
        expected.sort_unstable();
        match r.state.registers() {
            crate::sketches::Registers::BottomK(b) => assert_eq!(b.values(), &expected[..]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn lpca_rate_is_reset_under_downsampling() {
        let cfg = SketchConfig::Lpca { k: 64, p: 0.25 };
        let r = run_large_set(items(10), 1.0, cfg, Seed::from_u64(1)).unwrap();
        assert_eq!(r.state.config(), &SketchConfig::lpca(64));
        assert_eq!(effective_config(cfg, Pipeline::MakeDp), cfg);
    }

    #[test]
    fn merge_init_postconditions() {
        let eps = 2f64.ln();
        for family in crate::sketch::Family::ALL {
            let cfg = SketchConfig::with_family(family, 16);
            let params = derive_params(eps, &cfg).unwrap();
            for s in 0..20 {
                let (state, v) = dp_init_for_merge(eps, cfg, Seed::from_u64(s)).unwrap();
                assert!(v >= params.n0);
                assert!(state.sampling_probability() <= params.pi0);
            }
        }
    }

    #[test]
    fn merge_init_large_epsilon_bottomk_stops_at_k() {
        let cfg = SketchConfig::bottom_k(32);
        for s in 0..50 {
            let (_, v) = dp_init_for_merge(50.0, cfg, Seed::from_u64(s)).unwrap();
            assert_eq!(v, 32);
        }
    }

    #[test]
    fn merge_init_rejects_unreachable_pi0() {
        let cfg = SketchConfig::Hll { k: 16, register_width: 2 };
        assert!(matches!(
            dp_init_for_merge(0.01, cfg, Seed::from_u64(1)),
            Err(SketchError::Unsupported(_))
        ));
    }

    #[test]
    fn phantoms_are_disjoint_from_real_items() {
        let eps = 2f64.ln();
        let cfg = SketchConfig::bottom_k(1 << 12);
        let seed = Seed::from_u64(5);
        let (init, _) = dp_init_sketch(eps, cfg, seed).unwrap();
        let real = run_large_set(items(300), eps, cfg, seed).unwrap().state;
        let both = run_any_set(items(300), eps, cfg, seed).unwrap().state;
        assert_eq!(both, SketchState::merged(&init, &real).unwrap());
        let values = |s: &SketchState| match s.registers() {
            crate::sketches::Registers::BottomK(b) => b.values().to_vec(),
            _ => unreachable!(),
        };
        let real_values = values(&real);
        assert!(values(&init).iter().all(|h| real_values.binary_search(h).is_err()));
    }

    #[test]
    fn makedp_pi_ceiling() {
        let eps = 0.5;
        for family in crate::sketch::Family::ALL {
            let cfg = SketchConfig::with_family(family, 64);
            let existing = crate::sketch::build(cfg, Seed::from_u64(2), items(3)).unwrap();
            let r = make_dp(&existing, eps).unwrap();
            assert!(r.state.sampling_probability() <= pi0(eps));
        }
    }
}

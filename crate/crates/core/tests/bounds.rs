use dpsketch::audit::{empirical_delta, pipeline_estimates};
use dpsketch::bounds::{
    binomial_cdf, delta_adaptive, delta_bottomk, delta_for, delta_via_estimator_threshold,
    estimator_threshold,
};
use dpsketch::dp::{derive_params, Pipeline};
use dpsketch::{Seed, SketchConfig};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use statrs::distribution::{Binomial, DiscreteCDF};

const LN2: f64 = std::f64::consts::LN_2;

#[test]
fn binomial_cdf_matches_reference() {
    let mut rng = StdRng::seed_from_u64(1);
    for _ in 0..300 {
        let n = rng.gen_range(1..3000u64);
        let k = rng.gen_range(0..n);
        let p = rng.gen_range(0.01..0.99);
        let reference = Binomial::new(p, n).unwrap().cdf(k);
        let ours = binomial_cdf(k, n, p);
        if reference > 1e-250 {
            assert!(
                (ours - reference).abs() <= 1e-9 * reference.max(1e-12),
                "n={n} k={k} p={p}: {ours} vs {reference}"
            );
        } else {
            assert!(ours < 1e-240);
        }
    }
}

#[test]
fn adaptive_reuses_bottomk_value() {
    let mut rng = StdRng::seed_from_u64(2);
    for _ in 0..100 {
        let k = rng.gen_range(2..600usize);
        let eps = rng.gen_range(0.05..3.0);
        let n = rng.gen_range(0..20 * k as u64);
        let a = delta_adaptive(k, eps, n).unwrap();
        let b = delta_bottomk(k, eps, n).unwrap();
        assert_eq!(a.delta.to_bits(), b.delta.to_bits());
        assert_eq!(a.valid, b.valid);
    }
}

/// With `k = 32`, `n = 80`, `π ≥ 1/2` exactly when at most 31 hashes fall below 1/2.
#[test]
fn bottomk_delta_against_simulation() {
    let (k, n, trials) = (32usize, 80u64, 4000u64);
    let config = SketchConfig::bottom_k(k);
    let seed = Seed::from_u64(3);
    let emp = empirical_delta(config, LN2, n, trials, seed).unwrap();
    let exact = Binomial::new(0.5, n).unwrap().cdf(k as u64 - 1);
    assert!(emp.lo <= exact && exact <= emp.hi, "{emp:?} vs {exact}");
    assert!(emp.lo <= delta_bottomk(k, LN2, n).unwrap().delta);

    let est = pipeline_estimates(Pipeline::Raw, config, LN2, n, trials, seed).unwrap();
    let via = delta_via_estimator_threshold(&config, LN2, &est).unwrap();
    assert_eq!(via, emp.fraction);
}

#[test]
fn threshold_is_estimate_at_pi0() {
    let k = 32usize;
    let params = derive_params(LN2, &SketchConfig::bottom_k(k)).unwrap();
    let t = estimator_threshold(&SketchConfig::bottom_k(k), LN2).unwrap();
    assert!(((t - (k as f64 - 1.0) / params.pi0) / t).abs() < 1e-12);
    assert!(estimator_threshold(&SketchConfig::fm85(8), LN2).is_err());
    assert!(estimator_threshold(&SketchConfig::adaptive(8), LN2).is_err());
}

#[test]
fn bounds_fall_with_n() {
    let configs = [
        SketchConfig::hll(64),
        SketchConfig::bottom_k(64),
        SketchConfig::fm85(16),
        SketchConfig::lpca(256),
        SketchConfig::adaptive(64),
    ];
    for config in configs {
        let n0 = derive_params(0.5, &config).unwrap().n0;
        let mut prev = 1.0;
        for mult in [2u64, 4, 8, 16, 32] {
            let b = delta_for(&config, 0.5, mult * n0).unwrap();
            assert!(b.valid, "{config:?}");
            assert!(b.delta <= prev, "{config:?} at {mult}·n0");
            prev = b.delta;
        }
        let below = delta_for(&config, 0.5, n0 - 1).unwrap();
        assert!(!below.valid && below.delta == 1.0);
    }
}

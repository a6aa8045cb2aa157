use dpsketch::dp::{
    derive_params, dp_init_sketch, estimate_state, make_dp, passes_gate, run_any_set, run_base,
    run_large_set, run_pipeline, Pipeline, PrivacyStatus,
};
use dpsketch::sketches::Registers;
use dpsketch::stats::{ks_two_sample, StatReport};
use dpsketch::{build, ItemHasher, Seed, SketchConfig, SketchState};

const LN2: f64 = std::f64::consts::LN_2;

fn stream(first: u64, n: u64) -> impl Iterator<Item = [u8; 8]> {
    (first..first + n).map(u64::to_le_bytes)
}

#[test]
fn gate_keeps_pi0_fraction() {
    let hasher = ItemHasher::new(&Seed::from_u64(5));
    let n = 100_000u64;
    let kept = stream(0, n).filter(|x| passes_gate(&hasher, x, 0.5)).count();
    let sigma = (0.25 / n as f64).sqrt();
    assert!((kept as f64 / n as f64 - 0.5).abs() <= 3.0 * sigma);
}

/// Filled LPCA bits after init: `k(1 − (1 − π0/k)^{n0})` in expectation.
#[test]
fn init_survivors_fill_expected_bits() {
    let k = 1024usize;
    let params = derive_params(LN2, &SketchConfig::lpca(k)).unwrap();
    let expected = k as f64 * (1.0 - (1.0 - params.pi0 / k as f64).powf(params.n0 as f64));
    let filled: Vec<f64> = (0..400)
        .map(|s| {
            let (state, v) = dp_init_sketch(LN2, SketchConfig::lpca(k), Seed::from_u64(s)).unwrap();
            assert_eq!(v, params.n0);
            let Registers::Lpca(l) = state.registers() else { unreachable!() };
            l.filled() as f64
        })
        .collect();
    let r = StatReport::from_samples(&filled);
    assert!(r.within(expected, 4.0), "mean {} vs {expected}", r.mean);
}

/// Init phantoms and `n0` real items through the gate give the same `π` law.
#[test]
fn init_matches_gated_real_items() {
    let config = SketchConfig::lpca(64);
    let n0 = derive_params(LN2, &config).unwrap().n0;
    let trials = 2000u64;
    let init: Vec<f64> = (0..trials)
        .map(|s| {
            dp_init_sketch(LN2, config, Seed::from_u64(s))
                .unwrap()
                .0
                .sampling_probability()
        })
        .collect();
    let real: Vec<f64> = (0..trials)
        .map(|s| {
            run_large_set(stream(0, n0), LN2, config, Seed::from_u64(10_000 + s))
                .unwrap()
                .state
                .sampling_probability()
        })
        .collect();
    let (d, p) = ks_two_sample(&init, &real);
    assert!(p > 0.001, "KS D = {d}, p = {p}");
}

#[test]
fn base_on_large_stream_falls_below_pi0() {
    let trials = 2000u64;
    let below = (0..trials)
        .filter(|&s| {
            let run = run_base(stream(0, 10_000), LN2, SketchConfig::bottom_k(32), Seed::from_u64(s)).unwrap();
            run.status == PrivacyStatus::Approximate && run.state.sampling_probability() < 0.5
        })
        .count();
    assert!(below as f64 >= 0.999 * trials as f64);
}

#[test]
fn any_set_single_item_mean() {
    let config = SketchConfig::bottom_k(16);
    let est: Vec<f64> = (0..10_000)
        .map(|s| {
            let run = run_any_set(stream(7, 1), LN2, config, Seed::from_u64(s)).unwrap();
            assert_eq!(run.estimate.v, 32);
            assert!(run.estimate.is_consistent());
            run.estimate.value
        })
        .collect();
    let r = StatReport::from_samples(&est);
    assert!(r.within(1.0, 4.0), "mean {} se {}", r.mean, r.standard_error);
}

#[test]
fn make_dp_of_empty_sketch_is_centered() {
    let config = SketchConfig::bottom_k(16);
    let est: Vec<f64> = (0..4000)
        .map(|s| {
            let empty = SketchState::new(config, Seed::from_u64(s)).unwrap();
            let run = make_dp(&empty, LN2).unwrap();
            assert!(run.estimate.v >= 32);
            assert!(run.state.sampling_probability() <= 0.5);
            run.estimate.value
        })
        .collect();
    let r = StatReport::from_samples(&est);
    assert!(r.within(0.0, 4.0), "mean {} se {}", r.mean, r.standard_error);
}

#[test]
fn make_dp_rejects_unreachable_pi0() {
    let hll = SketchConfig::Hll { k: 16, register_width: 3 };
    let s = SketchState::new(hll, Seed::from_u64(1)).unwrap();
    assert!(make_dp(&s, 1e-4).is_err());
    assert!(make_dp(&s, LN2).is_ok());
}

#[test]
fn pipelines_need_epsilon_except_raw() {
    let config = SketchConfig::hll(32);
    for pipeline in Pipeline::ALL {
        let run = run_pipeline(pipeline, stream(0, 50), None, config, Seed::from_u64(2));
        assert_eq!(run.is_ok(), !pipeline.needs_epsilon(), "{pipeline:?}");
    }
}

#[test]
fn stored_state_reproduces_estimate() {
    for pipeline in Pipeline::ALL {
        let eps = pipeline.needs_epsilon().then_some(0.5);
        let run = run_pipeline(pipeline, stream(0, 3000), eps, SketchConfig::bottom_k(64), Seed::from_u64(9)).unwrap();
        let again = estimate_state(&run.state, pipeline, eps, run.estimate.v).unwrap();
        assert_eq!(again, run.estimate, "{pipeline:?}");
        assert!(run.estimate.is_consistent());
    }
}

#[test]
fn large_set_flags_small_streams() {
    let config = SketchConfig::bottom_k(16);
    let small = run_large_set(stream(0, 5), LN2, config, Seed::from_u64(1)).unwrap();
    assert_eq!(small.status, PrivacyStatus::LikelyBelowN0);
    let big = run_large_set(stream(0, 5000), LN2, config, Seed::from_u64(1)).unwrap();
    assert_eq!(big.status, PrivacyStatus::Pure);
}

#[test]
fn downsampled_lpca_runs_at_full_rate() {
    let run = run_any_set(stream(0, 10), 1.0, SketchConfig::Lpca { k: 64, p: 0.3 }, Seed::from_u64(0)).unwrap();
    assert_eq!(run.state.config(), &SketchConfig::Lpca { k: 64, p: 1.0 });
    let plain = build(SketchConfig::Lpca { k: 64, p: 0.3 }, Seed::from_u64(0), stream(0, 10)).unwrap();
    assert_eq!(plain.config(), &SketchConfig::Lpca { k: 64, p: 0.3 });
}

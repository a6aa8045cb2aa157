use dpsketch::audit::{audit_dp, removal_set, stream, AuditSetup, Verdict};
use dpsketch::dp::Pipeline;
use dpsketch::{build, Seed, SketchConfig};

fn setup(pipeline: Pipeline, epsilon: f64, self_compare: bool) -> AuditSetup {
    AuditSetup {
        config: SketchConfig::Lpca { k: 4, p: 1.0 },
        pipeline,
        epsilon,
        n: 6,
        trials: 20_000,
        seed: Seed::from_u64(77),
        self_compare,
    }
}

#[test]
fn plain_sketch_of_tiny_stream_is_flagged() {
    let report = audit_dp(&setup(Pipeline::Base, 0.01, false)).unwrap();
    assert_eq!(report.verdict, Verdict::ViolationDetected);
    assert!(report.violating_states > 0);
}

#[test]
fn identical_inputs_show_no_violation() {
    let report = audit_dp(&setup(Pipeline::Base, 0.1, true)).unwrap();
    assert_eq!(report.violating_states, 0);
    assert_eq!(report.verdict, Verdict::ConsistentWithDp);
}

#[test]
fn removal_sets_are_exact_and_capped() {
    let configs = [
        SketchConfig::hll(8),
        SketchConfig::bottom_k(8),
        SketchConfig::Fm85 { k: 2, bitmap_len: 6 },
        SketchConfig::lpca(8),
        SketchConfig::adaptive(8),
    ];
    let items: Vec<[u8; 8]> = stream(1, 200).collect();
    for config in configs {
        let seed = Seed::from_u64(4);
        let set = removal_set(&items, config, seed).unwrap();
        assert!(set.len() as u64 <= config.kmax(), "{config:?}: {}", set.len());
        let full = build(config, seed, &items).unwrap();
        for i in [0usize, 50, 199] {
            let without: Vec<_> = items.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, x)| *x).collect();
            let changed = build(config, seed, &without).unwrap() != full;
            assert_eq!(changed, set.contains(&i), "{config:?} item {i}");
        }
    }
}

use tcwu::bench::{run_bench, BenchConfig};
use tcwu::{ModelConfig, ModelWeights};

#[test]
fn ten_second_harness_is_finite_and_stable() {
    let model = ModelWeights::init_random(&ModelConfig::default(), 0).unwrap();
    let report = run_bench(&model, &BenchConfig::default()).unwrap();
    assert_eq!(report.rtf_runs.len(), 3);
    assert!(
        (report.audio_secs - 9.984).abs() < 1e-9,
        "{}",
        report.audio_secs
    );
    for r in &report.rtf_runs {
        assert!(r.is_finite() && *r > 0.0);
        assert!(
            (r - report.rtf_median).abs() <= 0.2 * report.rtf_median,
            "runs {:?}",
            report.rtf_runs
        );
    }
    assert_eq!(report.parameter_count, 5_810_009);
    assert_eq!(report.parameter_delta, 5_810_009 - 8_310_000);
    let l = report.latency;
    assert!(l.p50_ms <= l.p95_ms && l.p95_ms <= l.p99_ms && l.p99_ms <= l.max_ms);
}

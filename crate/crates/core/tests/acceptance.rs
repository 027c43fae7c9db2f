//! Acceptance checks. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any fail.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{max_abs_diff, prefix_identical, random_frame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tcwu::audio::{mix_at_snr, synth_scene, AudioClip};
use tcwu::bench::{run_bench, BenchConfig};
use tcwu::container::{encode, read_weights, write_weights};
use tcwu::metrics::{si_snr, wsdr_loss, SI_SNR_CAP_DB};
use tcwu::model::CacheSlot;
use tcwu::{
    analytic_receptive_field, ConvSpec, Frame, LayerCache, ModelConfig, ModelWeights,
    NetworkCaches, Stream, StreamConfig,
};

const LEN: usize = 16384;
const EQUIVALENCE_SEEDS: u64 = 5;
const EQUIVALENCE_CHUNKS: [usize; 4] = [512, 1024, 2048, 16384];
const LOOKAHEAD_CASES: usize = 100;
const WSDR_PERFECT_TOL: f64 = 1e-6;
const ALPHA_REL_TOL: f64 = 1e-6;
const SI_SNR_ORTHOGONAL_TOL: f64 = 1e-3;
const SNR_TOL_DB: f64 = 0.01;
const PUSH: usize = 640;
const RTF_LIMIT: f64 = 1.0;
const P95_LIMIT_MS: f64 = 32.0;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn default_model(seed: u64) -> ModelWeights {
    ModelWeights::init_random(&ModelConfig::default(), seed).unwrap()
}

fn stream_chunks(model: &ModelWeights, input: &Frame, chunk: usize) -> Frame {
    let mut stream = Stream::new(model, StreamConfig::with_chunk(chunk)).unwrap();
    let mut out = Frame::zeros(1, 0);
    for start in (0..input.len()).step_by(chunk) {
        out.append_time(
            &stream
                .push(&input.slice_time(start, start + chunk))
                .unwrap(),
        )
        .unwrap();
    }
    out.append_time(&stream.flush().unwrap()).unwrap();
    out
}

fn streaming_equivalence() -> Outcome {
    let mut worst = 0.0f32;
    for seed in 0..EQUIVALENCE_SEEDS {
        let model = default_model(seed);
        let input = random_frame(8, LEN, 1000 + seed);
        let offline = model.forward_offline(&input).unwrap();
        for chunk in EQUIVALENCE_CHUNKS {
            worst = worst.max(max_abs_diff(
                &offline,
                &stream_chunks(&model, &input, chunk),
            ));
        }
    }
    check(
        worst == 0.0,
        format!(
            "{EQUIVALENCE_SEEDS} seeds x chunks {EQUIVALENCE_CHUNKS:?}, max |offline - streamed| = {worst:e}"
        ),
    )
}

fn zero_lookahead() -> Outcome {
    const SEEDS: usize = 10;
    const LEN_LA: usize = 1024;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut failures = 0;
    let mut changed_at_t = 0;
    for s in 0..SEEDS {
        let model = default_model(200 + s as u64);
        let input = random_frame(8, LEN_LA, 300 + s as u64);
        let base = model.forward_offline(&input).unwrap();
        for _ in 0..LOOKAHEAD_CASES / SEEDS {
            let t = rng.gen_range(0..LEN_LA);
            let c = rng.gen_range(0..8);
            let mut x = input.clone();
            x.set(c, t, x.get(c, t) + rng.gen_range(0.5f32..2.0));
            let out = model.forward_offline(&x).unwrap();
            if !prefix_identical(&base, &out, t) {
                failures += 1;
            }
            if (t..LEN_LA).any(|i| out.get(0, i) != base.get(0, i)) {
                changed_at_t += 1;
            }
        }
    }
    check(
        failures == 0 && changed_at_t == LOOKAHEAD_CASES,
        format!(
            "{LOOKAHEAD_CASES} perturbations, {failures} disturbed an earlier output, \
             {changed_at_t} changed a later one"
        ),
    )
}

fn cache_size_rule() -> Outcome {
    let cfg = ModelConfig::default();
    let model = default_model(0);
    let caches = NetworkCaches::new(&cfg);
    let mut bad = Vec::new();
    let mut conv = 0;
    for (slot, cache) in caches.graph_order() {
        let spec = match slot {
            CacheSlot::Encoder(i) => Some(model.encoder[i].conv1.spec),
            CacheSlot::Bottleneck => Some(model.bottleneck.conv.spec),
            CacheSlot::Decoder(i) => Some(model.decoder[i].block.conv1.spec),
            CacheSlot::Upsample(_) => None,
        };
        let expected = spec.map_or(1, |s| (s.kernel_size - 1) * s.dilation);
        conv += usize::from(spec.is_some());
        if cache.history_len() != expected {
            bad.push(format!("{slot:?}: {} != {expected}", cache.history_len()));
        }
    }
    let spot = LayerCache::for_conv(&ConvSpec::new(216, 216, 15, 64).unwrap()).history_len();
    let enc_last = caches.encoder[8].history_len();
    check(
        bad.is_empty() && spot == 896 && enc_last == 896,
        format!(
            "{conv} conv caches equal (k-1)*d, upsample caches hold 1 sample; \
             k=15 d=64 -> {spot}, deepest encoder cache {enc_last}{}",
            if bad.is_empty() {
                String::new()
            } else {
                format!("; mismatches {bad:?}")
            }
        ),
    )
}

fn receptive_field() -> Outcome {
    let rf = analytic_receptive_field(&ModelConfig::default()).unwrap();
    let dilations: usize = ModelConfig::default().dilations.iter().sum();
    let direct = 1 + 14 * dilations;
    check(
        rf.dilated_stack == 1807 && direct == 1807,
        format!(
            "dilated stack {} (1 + 14 * {dilations}); full graph with decimation {}",
            rf.dilated_stack, rf.decimation_aware
        ),
    )
}

fn wsdr_direct(x: &[f32], y: &[f32], yh: &[f32]) -> (f64, f64) {
    let mut s = [0.0f64; 7];
    for i in 0..x.len() {
        let (xv, yv, hv) = (x[i] as f64, y[i] as f64, yh[i] as f64);
        let (zv, zh) = (xv - yv, xv - hv);
        s[0] += yv * yv;
        s[1] += zv * zv;
        s[2] += yv * hv;
        s[3] += hv * hv;
        s[4] += zv * zh;
        s[5] += zh * zh;
    }
    let alpha = s[0] / (s[0] + s[1]);
    let value = -alpha * s[2] / (s[0].sqrt() * s[3].sqrt())
        - (1.0 - alpha) * s[4] / (s[1].sqrt() * s[5].sqrt());
    (alpha, value)
}

fn wsdr_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_perfect, mut worst_alpha, mut worst_value) = (0.0f64, 0.0f64, 0.0f64);
    let mut out_of_bounds = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(16..512);
        let mut v = || {
            (0..n)
                .map(|_| rng.gen_range(-1.0f32..1.0))
                .collect::<Vec<f32>>()
        };
        let (x, y, yh) = (v(), v(), v());
        let perfect = wsdr_loss(&x, &y, &y).unwrap().value;
        worst_perfect = worst_perfect.max((perfect + 1.0).abs());
        let r = wsdr_loss(&x, &y, &yh).unwrap();
        let (alpha, value) = wsdr_direct(&x, &y, &yh);
        worst_alpha = worst_alpha.max((r.extra("alpha").unwrap() - alpha).abs() / alpha);
        worst_value = worst_value.max((r.value - value).abs());
        if !(-1.0..=1.0).contains(&r.value) || !(-1.0..=1.0).contains(&perfect) {
            out_of_bounds += 1;
        }
    }
    check(
        worst_perfect <= WSDR_PERFECT_TOL && worst_alpha <= ALPHA_REL_TOL && out_of_bounds == 0,
        format!(
            "1000 triples: perfect estimate off -1 by <= {worst_perfect:.1e}, alpha rel err {worst_alpha:.1e}, \
             value err {worst_value:.1e}, {out_of_bounds} outside [-1, 1]"
        ),
    )
}

fn si_snr_invariance() -> Outcome {
    let y = random_frame(1, 4096, 9).into_data();
    let values: Vec<f64> = [0.1f32, 1.0, 10.0]
        .iter()
        .map(|&a| {
            si_snr(&y, &y.iter().map(|v| a * v).collect::<Vec<_>>())
                .unwrap()
                .value
        })
        .collect();
    let n = 4096;
    let w = 2.0 * std::f64::consts::PI * 37.0 / n as f64;
    let s: Vec<f32> = (0..n).map(|i| (w * i as f64).sin() as f32).collect();
    let est: Vec<f32> = (0..n)
        .map(|i| (s[i] as f64 + (w * i as f64).cos()) as f32)
        .collect();
    let orth = si_snr(&s, &est).unwrap().value;
    check(
        values.iter().all(|&v| v == values[0])
            && values[0] == SI_SNR_CAP_DB
            && orth.abs() <= SI_SNR_ORTHOGONAL_TOL,
        format!(
            "a in {{0.1, 1, 10}} -> {values:?} dB (cap {SI_SNR_CAP_DB}); orthogonal equal energy -> {orth:.2e} dB"
        ),
    )
}

fn snr_targeting() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let ch = rng.gen_range(1..=8);
        let len = rng.gen_range(256..4096);
        let extra = rng.gen_range(0..1024);
        let gain = rng.gen_range(0.01f32..2.0);
        let sig = random_frame(ch, len, 2 * case);
        let sig = Frame::new(ch, len, sig.data().iter().map(|v| v * gain).collect()).unwrap();
        let noise = random_frame(ch, len + extra, 2 * case + 1);
        let snr = rng.gen_range(-10.0..30.0);
        let reverb = AudioClip::new(16_000, sig).unwrap();
        let mix = mix_at_snr(&reverb, &AudioClip::new(16_000, noise).unwrap(), snr).unwrap();
        let (mut ps, mut pn) = (0.0f64, 0.0f64);
        for (&m, &s) in mix.frame.data().iter().zip(reverb.frame.data()) {
            ps += f64::from(s) * f64::from(s);
            pn += (f64::from(m) - f64::from(s)).powi(2);
        }
        worst = worst.max((10.0 * (ps / pn).log10() - snr).abs());
    }
    check(
        worst <= SNR_TOL_DB,
        format!("100 random mixtures, worst |measured - requested| = {worst:.2e} dB"),
    )
}

fn shape_and_latency() -> Outcome {
    let model = default_model(1);
    let input = random_frame(8, LEN, 21);
    let offline = model.forward_offline(&input).unwrap();
    let mut stream = Stream::new(&model, StreamConfig::default()).unwrap();
    let mut first_output_push = None;
    let mut first_reaching_512 = None;
    let mut total_out = 0;
    for (i, start) in (0..LEN).step_by(PUSH).enumerate() {
        let end = (start + PUSH).min(LEN);
        let out = stream.push(&input.slice_time(start, end)).unwrap();
        if end >= 512 && first_reaching_512.is_none() {
            first_reaching_512 = Some(i);
        }
        if !out.is_empty() && first_output_push.is_none() {
            first_output_push = Some(i);
        }
        total_out += out.len();
    }
    total_out += stream.flush().unwrap().len();
    check(
        (offline.channels(), offline.len()) == (1, LEN)
            && total_out == LEN
            && first_output_push.is_some()
            && first_output_push <= first_reaching_512,
        format!(
            "offline output {}x{}, streamed {total_out} samples; first output on push {:?}, \
             cumulative input reaches 512 on push {:?}",
            offline.channels(),
            offline.len(),
            first_output_push,
            first_reaching_512
        ),
    )
}

fn container_round_trip() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut identical = 0;
    for seed in 0..5 {
        let model = default_model(seed);
        let a = dir.path().join(format!("{seed}a.tcwu"));
        let b = dir.path().join(format!("{seed}b.tcwu"));
        write_weights(&a, &model).unwrap();
        let loaded = read_weights(&a).unwrap();
        write_weights(&b, &loaded).unwrap();
        let (ba, bb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        if ba == bb && loaded == model && encode(&loaded).unwrap() == ba {
            identical += 1;
        }
    }
    check(
        identical == 5,
        format!("{identical}/5 seeds byte-identical after write, read, write"),
    )
}

fn realtime_factor() -> Outcome {
    let model = default_model(0);
    let report = run_bench(&model, &BenchConfig::default()).unwrap();
    check(
        report.rtf_median < RTF_LIMIT && report.latency.p95_ms < P95_LIMIT_MS,
        format!(
            "{:.0} s of 8-ch audio in 512-sample chunks: RTF median {:.3} (runs {:?}), \
             chunk latency p95 {:.2} ms",
            report.audio_secs,
            report.rtf_median,
            report
                .rtf_runs
                .iter()
                .map(|r| (r * 1000.0).round() / 1000.0)
                .collect::<Vec<_>>(),
            report.latency.p95_ms
        ),
    )
}

fn scene_metric_sanity() -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for (seed, snr) in [(1u64, 0.0), (2, 5.0), (3, 15.0)] {
        let scene = synth_scene(seed, 1.0, 8, snr, 16_000).unwrap();
        let x = scene.mixture.frame.row(0);
        let y = scene.reference.frame.row(0);
        let w = wsdr_loss(x, y, y).unwrap().value;
        let mix = si_snr(y, x).unwrap().value;
        let cap = si_snr(y, y).unwrap().value;
        ok &= (w + 1.0).abs() <= WSDR_PERFECT_TOL && mix < cap;
        detail.push(format!(
            "{snr} dB: wSDR {w:.6}, SI-SNR mix {mix:.2} < ref {cap:.0}"
        ));
    }
    check(ok, detail.join("; "))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("streaming equivalence", streaming_equivalence),
        ("zero look-ahead", zero_lookahead),
        ("cache size rule", cache_size_rule),
        ("receptive field", receptive_field),
        ("wSDR correctness", wsdr_correctness),
        ("SI-SNR scale invariance", si_snr_invariance),
        ("SNR targeting", snr_targeting),
        ("shape and latency contract", shape_and_latency),
        ("weight container round trip", container_round_trip),
        ("real-time factor", realtime_factor),
        ("scene metric sanity", scene_metric_sanity),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (verdict, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "{verdict} {:>2} {name}: {detail} [{:.1} s]",
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

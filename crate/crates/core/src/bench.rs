//! Streaming real-time-factor harness.
//!
//! A synthetic scene is streamed chunk by chunk through a fresh [`Stream`];
//! only model compute is timed. One untimed warm-up pass precedes the timed
//! runs.

use std::time::Instant;

use serde::Serialize;

use crate::audio::synth_scene;
use crate::error::{Error, Result};
use crate::metrics::rtf;
use crate::model::ModelWeights;
use crate::stream::{Stream, StreamConfig};

/// Reference parameter count the report compares against, in millions.
pub const REFERENCE_PARAMS_MILLIONS: f64 = 8.31;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub duration_secs: f64,
    pub chunk_len: usize,
    pub repeat: usize,
    pub sample_rate: u32,
    /// Seed of the synthetic input scene.
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            duration_secs: 10.0,
            chunk_len: 512,
            repeat: 3,
            sample_rate: 16_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyStats {
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub audio_secs: f64,
    pub chunk_len: usize,
    pub chunk_ms: f64,
    pub rtf_runs: Vec<f64>,
    pub rtf_median: f64,
    pub rtf_min: f64,
    /// Per-chunk compute latency pooled over all timed runs.
    pub latency: LatencyStats,
    pub parameter_count: usize,
    /// `parameter_count` minus the 8.31 M reference.
    pub parameter_delta: i64,
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        let runs: Vec<String> = self.rtf_runs.iter().map(|r| format!("{r:.4}")).collect();
        format!(
            "audio_secs={:.3}\nchunk_len={}\nchunk_ms={:.2}\nrtf_runs={}\nrtf_median={:.4}\n\
             rtf_min={:.4}\nlatency_p50_ms={:.3}\nlatency_p95_ms={:.3}\nlatency_p99_ms={:.3}\n\
             latency_max_ms={:.3}\nparameters={}\nparameters_vs_8.31M={:+}\n",
            self.audio_secs,
            self.chunk_len,
            self.chunk_ms,
            runs.join(","),
            self.rtf_median,
            self.rtf_min,
            self.latency.p50_ms,
            self.latency.p95_ms,
            self.latency.p99_ms,
            self.latency.max_ms,
            self.parameter_count,
            self.parameter_delta,
        )
    }
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn run_bench(model: &ModelWeights, cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.duration_secs.is_nan() || cfg.duration_secs < 1.0 {
        return Err(Error::Config(format!(
            "benchmark duration {} s must be at least 1 s",
            cfg.duration_secs
        )));
    }
    if cfg.repeat == 0 {
        return Err(Error::Config("repeat must be at least 1".into()));
    }
    let stream_cfg = StreamConfig {
        chunk_len: cfg.chunk_len,
        sample_rate: cfg.sample_rate,
    };
    stream_cfg.validate(model)?;
    let scene = synth_scene(
        cfg.seed,
        cfg.duration_secs,
        model.config.input_channels,
        5.0,
        cfg.sample_rate,
    )?;
    let input = &scene.mixture.frame;
    let chunks: Vec<_> = (0..input.len() / cfg.chunk_len)
        .map(|i| input.slice_time(i * cfg.chunk_len, (i + 1) * cfg.chunk_len))
        .collect();
    let audio_secs = (chunks.len() * cfg.chunk_len) as f64 / f64::from(cfg.sample_rate);

    let run = |latencies: &mut Vec<f64>| -> Result<f64> {
        let mut stream = Stream::new(model, stream_cfg)?;
        let mut total = 0.0;
        for chunk in &chunks {
            let start = Instant::now();
            let out = stream.push(chunk)?;
            let secs = start.elapsed().as_secs_f64();
            debug_assert_eq!(out.len(), cfg.chunk_len);
            total += secs;
            latencies.push(secs * 1e3);
        }
        Ok(total)
    };

    run(&mut Vec::new())?;
    let mut latencies = Vec::with_capacity(chunks.len() * cfg.repeat);
    let mut rtf_runs = Vec::with_capacity(cfg.repeat);
    for _ in 0..cfg.repeat {
        let secs = run(&mut latencies)?;
        rtf_runs.push(rtf(secs, audio_secs)?);
    }
    latencies.sort_by(f64::total_cmp);
    let parameter_count = model.parameter_count();
    Ok(BenchReport {
        audio_secs,
        chunk_len: cfg.chunk_len,
        chunk_ms: stream_cfg.chunk_seconds() * 1e3,
        rtf_median: median(&rtf_runs),
        rtf_min: rtf_runs.iter().copied().fold(f64::INFINITY, f64::min),
        rtf_runs,
        latency: LatencyStats {
            p50_ms: percentile(&latencies, 50.0),
            p95_ms: percentile(&latencies, 95.0),
            p99_ms: percentile(&latencies, 99.0),
            max_ms: latencies.last().copied().unwrap_or(f64::NAN),
        },
        parameter_count,
        parameter_delta: parameter_count as i64 - (REFERENCE_PARAMS_MILLIONS * 1e6).round() as i64,
    })
}

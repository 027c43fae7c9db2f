//! Feed audio in 40 ms pushes (640 samples at 16 kHz) and show when output
//! becomes available. The model processes 512-sample chunks internally, so
//! each push returns zero, one or two chunks.
//!
//! The streamed result is compared against the offline pass at the end.

use anyhow::{ensure, Result};
use tcwu::audio::synth_scene;
use tcwu::{ModelConfig, ModelWeights, Stream, StreamConfig};

const PUSH: usize = 640;

fn main() -> Result<()> {
    let model = ModelWeights::init_random(&ModelConfig::default(), 3)?;
    let scene = synth_scene(3, 1.0, 8, 5.0, 16_000)?;
    let input = &scene.mixture.frame;

    let mut stream = Stream::new(&model, StreamConfig::default())?;
    let mut streamed = tcwu::Frame::zeros(1, 0);
    for (i, start) in (0..input.len()).step_by(PUSH).enumerate() {
        let end = (start + PUSH).min(input.len());
        let t = std::time::Instant::now();
        let out = stream.push(&input.slice_time(start, end))?;
        println!(
            "push {i:2}: in={:4} out={:4} pending={:3} {:6.2} ms",
            end - start,
            out.len(),
            stream.state().pending(),
            t.elapsed().as_secs_f64() * 1e3
        );
        streamed.append_time(&out)?;
    }
    let tail = stream.flush()?;
    println!("flush: {} samples", tail.len());
    streamed.append_time(&tail)?;

    let mut padded = input.clone();
    let min = model.config.min_chunk_len();
    let pad = input.len().div_ceil(min) * min - input.len();
    padded.append_time(&tcwu::Frame::zeros(input.channels(), pad))?;
    let offline = model.forward_offline(&padded)?.slice_time(0, input.len());
    ensure!(streamed.len() == offline.len());
    let diff = streamed
        .data()
        .iter()
        .zip(offline.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    println!("max |stream - offline| = {diff:e}");
    Ok(())
}

//! Enhance a synthetic 8-channel scene in one offline pass and score it.
//!
//! Weights are random, so the scores only show the plumbing works.
//!
//! ```text
//! cargo run --release --example offline_enhance -- [seed]
//! ```

use anyhow::Result;
use tcwu::audio::synth_scene;
use tcwu::cli::enhance_offline;
use tcwu::metrics::{format_reports, si_snr, wsdr_loss};
use tcwu::{ModelConfig, ModelWeights};

fn main() -> Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(1);
    let model = ModelWeights::init_random(&ModelConfig::default(), seed)?;
    let scene = synth_scene(seed, 2.0, 8, 5.0, 16_000)?;

    let start = std::time::Instant::now();
    let enhanced = enhance_offline(&model, &scene.mixture.frame)?;
    println!(
        "enhanced {} samples in {:.3} s",
        enhanced.len(),
        start.elapsed().as_secs_f64()
    );

    let mix0 = scene.mixture.frame.row(0);
    let clean = scene.reference.frame.row(0);
    let reports = [
        si_snr(clean, mix0)?,
        si_snr(clean, enhanced.row(0))?,
        wsdr_loss(mix0, clean, enhanced.row(0))?,
    ];
    print!("{}", format_reports(&reports));
    Ok(())
}

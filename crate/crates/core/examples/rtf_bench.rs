//! Streaming real-time factor and per-chunk latency of the default model.
//!
//! ```text
//! cargo run --release --example rtf_bench -- [seconds]
//! ```

use anyhow::Result;
use tcwu::bench::{run_bench, BenchConfig};
use tcwu::{ModelConfig, ModelWeights};

fn main() -> Result<()> {
    let duration_secs = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(4.0);
    let model = ModelWeights::init_random(&ModelConfig::default(), 0)?;
    let report = run_bench(
        &model,
        &BenchConfig {
            duration_secs,
            ..BenchConfig::default()
        },
    )?;
    print!("{}", report.to_text());
    Ok(())
}

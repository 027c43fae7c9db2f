//! Print the per-layer history caches of the default network in graph order,
//! with their local rates and sizes, plus the receptive field.

use anyhow::Result;
use tcwu::model::CacheSlot;
use tcwu::{analytic_receptive_field, ModelConfig, NetworkCaches};

fn main() -> Result<()> {
    let config = ModelConfig::default();
    let caches = NetworkCaches::new(&config);
    println!(
        "{:<14} {:>5} {:>8} {:>6} {:>8}",
        "layer", "rate", "channels", "len", "floats"
    );
    for (slot, cache) in caches.graph_order() {
        let (name, level) = match slot {
            CacheSlot::Encoder(i) => (format!("encoder.{i}"), i),
            CacheSlot::Bottleneck => ("bottleneck".to_string(), config.num_levels),
            CacheSlot::Upsample(i) => (format!("upsample.{i}"), i + 1),
            CacheSlot::Decoder(i) => (format!("decoder.{i}"), i),
        };
        println!(
            "{name:<14} 1/{:<3} {:>8} {:>6} {:>8}",
            1usize << level,
            cache.channels(),
            cache.history_len(),
            cache.channels() * cache.history_len()
        );
    }
    println!(
        "caches: {} conv + {} upsample, {} floats total",
        caches.conv_cache_count(),
        caches.upsample_cache_count(),
        caches.total_len()
    );
    let rf = analytic_receptive_field(&config)?;
    println!(
        "receptive field: dilated stack {} samples",
        rf.dilated_stack
    );
    println!(
        "receptive field: full graph {} samples",
        rf.decimation_aware
    );
    Ok(())
}

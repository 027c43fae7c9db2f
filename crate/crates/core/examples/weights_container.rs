//! Write seeded weights to a container file, read them back, and list the
//! first few tensors with their checksums.

use anyhow::{ensure, Result};
use tcwu::container::{encode, inspect, read_weights, write_weights};
use tcwu::{ModelConfig, ModelWeights};

fn main() -> Result<()> {
    let dir = std::env::temp_dir().join("tcwu-weights-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("seed42.tcwu");

    let model = ModelWeights::init_random(&ModelConfig::default(), 42)?;
    write_weights(&path, &model)?;
    let loaded = read_weights(&path)?;
    ensure!(loaded == model, "round trip changed the weights");
    ensure!(
        encode(&loaded)? == std::fs::read(&path)?,
        "re-encoding is not byte-identical"
    );

    let (manifest, tensors) = inspect(&std::fs::read(&path)?)?;
    println!(
        "{} version {}, {} tensors",
        path.display(),
        manifest.version,
        tensors.len()
    );
    for t in tensors.iter().take(8) {
        println!("  {:<32} {:?} {}", t.entry.name, t.entry.shape, t.checksum);
    }
    println!("trainable parameters: {}", loaded.parameter_count());
    Ok(())
}

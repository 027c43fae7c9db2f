#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tcwu::{Frame, ModelConfig};

/// Two-level network small enough for exhaustive perturbation sweeps.
pub fn small_config() -> ModelConfig {
    ModelConfig {
        input_channels: 2,
        num_levels: 2,
        encoder_kernel: 3,
        decoder_kernel: 3,
        channel_ladder: vec![2, 3, 4],
        bottleneck_channels: 5,
        dilations: vec![1, 2],
        bn_eps: 1e-5,
    }
}

/// Three levels with the default kernel sizes.
pub fn medium_config() -> ModelConfig {
    ModelConfig {
        input_channels: 3,
        num_levels: 3,
        encoder_kernel: 15,
        decoder_kernel: 5,
        channel_ladder: vec![3, 6, 8, 10],
        bottleneck_channels: 12,
        dilations: vec![1, 2, 4],
        bn_eps: 1e-5,
    }
}

pub fn random_frame(channels: usize, len: usize, seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..channels * len)
        .map(|_| rng.gen_range(-1.0f32..1.0))
        .collect();
    Frame::new(channels, len, data).unwrap()
}

pub fn max_abs_diff(a: &Frame, b: &Frame) -> f32 {
    assert_eq!((a.channels(), a.len()), (b.channels(), b.len()));
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f32::max)
}

/// Bitwise equality of the first `n` samples of every channel.
pub fn prefix_identical(a: &Frame, b: &Frame, n: usize) -> bool {
    (0..a.channels()).all(|c| {
        a.row(c)[..n]
            .iter()
            .zip(&b.row(c)[..n])
            .all(|(x, y)| x.to_bits() == y.to_bits())
    })
}

//! Streaming speech enhancement with a temporal-convolution Wave-U-Net.
//!
//! The network is a U-Net over raw multi-channel waveforms whose encoder and
//! decoder are stacks of dilated causal convolutions. Every stateful layer
//! keeps a history cache, so audio can be pushed in small chunks and the
//! enhanced output is bit-identical to running the whole utterance at once.
//!
//! ```no_run
//! use tcwu::{Frame, ModelConfig, ModelWeights, Stream, StreamConfig};
//!
//! let model = ModelWeights::init_random(&ModelConfig::default(), 42)?;
//! let mut stream = Stream::new(&model, StreamConfig::default())?;
//! let forty_ms = Frame::zeros(8, 640);
//! let enhanced = stream.push(&forty_ms)?; // 512 samples out, 128 pending
//! let tail = stream.flush()?;
//! # Ok::<(), tcwu::Error>(())
//! ```
//!
//! Modules:
//!
//! - [`tensor`]: frames, caches and the kernels the graph is built from
//! - [`model`]: configuration, weights and the forward pass
//! - [`container`]: the `TCWU` weight file
//! - [`stream`]: chunked inference and the offline-equivalence check
//! - [`audio`]: WAV I/O and synthetic noisy scenes
//! - [`metrics`]: SDR, wSDR, SI-SNR, MSE and real-time factor
//! - [`bench`](mod@bench): the streaming RTF harness
//! - [`cli`]: the commands behind the `tcwu` binary

pub mod audio;
pub mod bench;
pub mod cli;
pub mod container;
mod error;
pub mod metrics;
pub mod model;
pub mod stream;
pub mod tensor;

pub use error::{Error, Result};
pub use model::{analytic_receptive_field, ModelConfig, ModelWeights, NetworkCaches};
pub use stream::{verify_streaming_equivalence, Stream, StreamConfig, StreamState};

pub use tensor::{ConvSpec, Frame, LayerCache};

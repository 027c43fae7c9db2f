//! Chunked inference over a live stream.
//!
//! A [`Stream`] buffers pushed samples until a full chunk is available, runs
//! the network on that chunk with the stack of history caches, and returns the
//! enhanced samples. Pushes may be any size: 640-sample (40 ms) pushes drain in
//! 512-sample chunks, and the concatenated output equals offline inference of
//! the whole signal.

use crate::error::{Error, Result};
use crate::model::{ModelWeights, NetworkCaches};
use crate::tensor::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamConfig {
    /// Samples per internal forward pass. Must be a multiple of `2^num_levels`.
    pub chunk_len: usize,
    pub sample_rate: u32,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            chunk_len: 512,
            sample_rate: 16_000,
        }
    }
}

impl StreamConfig {
    pub fn with_chunk(chunk_len: usize) -> Self {
        Self {
            chunk_len,
            ..Self::default()
        }
    }

    pub fn validate(&self, model: &ModelWeights) -> Result<()> {
        let min = model.config.min_chunk_len();
        if self.chunk_len == 0 || !self.chunk_len.is_multiple_of(min) {
            return Err(Error::Config(format!(
                "chunk length {} is not a positive multiple of {min}",
                self.chunk_len
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        Ok(())
    }

    pub fn chunk_seconds(&self) -> f64 {
        self.chunk_len as f64 / f64::from(self.sample_rate)
    }
}

/// The complete mutable state of one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamState {
    caches: NetworkCaches,
    framer: Frame,
    emitted: u64,
    poisoned: bool,
}

impl StreamState {
    fn new(model: &ModelWeights) -> Self {
        Self {
            caches: NetworkCaches::new(&model.config),
            framer: Frame::zeros(model.config.input_channels, 0),
            emitted: 0,
            poisoned: false,
        }
    }

    pub fn caches(&self) -> &NetworkCaches {
        &self.caches
    }

    /// Samples waiting for a full chunk.
    pub fn pending(&self) -> usize {
        self.framer.len()
    }

    /// Output samples produced so far.
    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    pub fn is_poisoned(&self) -> bool {
        self.poisoned
    }

    pub fn reset(&mut self) {
        self.caches.reset();
        self.framer = Frame::zeros(self.framer.channels(), 0);
        self.emitted = 0;
        self.poisoned = false;
    }

    /// Deterministic byte image of the state.
    ///
    /// `emitted: u64`, `poisoned: u8`, framer `channels: u32`, `len: u32` and
    /// samples, then `cache_count: u32` and for each cache in graph order
    /// `channels: u32`, `history_len: u32` and samples. All little-endian,
    /// samples as `f32`.
    pub fn snapshot(&self) -> Vec<u8> {
        let mut out =
            Vec::with_capacity(32 + 4 * (self.framer.data().len() + self.caches.total_len()));
        out.extend_from_slice(&self.emitted.to_le_bytes());
        out.push(u8::from(self.poisoned));
        push_block(
            &mut out,
            self.framer.channels(),
            self.framer.len(),
            self.framer.data(),
        );
        let caches = self.caches.graph_order();
        out.extend_from_slice(&(caches.len() as u32).to_le_bytes());
        for (_, c) in caches {
            push_block(&mut out, c.channels(), c.history_len(), c.data());
        }
        out
    }
}

fn push_block(out: &mut Vec<u8>, channels: usize, len: usize, data: &[f32]) {
    out.extend_from_slice(&(channels as u32).to_le_bytes());
    out.extend_from_slice(&(len as u32).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// One live audio stream over shared weights.
#[derive(Debug, Clone)]
pub struct Stream<'m> {
    model: &'m ModelWeights,
    config: StreamConfig,
    state: StreamState,
}

impl<'m> Stream<'m> {
    pub fn new(model: &'m ModelWeights, config: StreamConfig) -> Result<Self> {
        config.validate(model)?;
        Ok(Self {
            model,
            config,
            state: StreamState::new(model),
        })
    }

    pub fn config(&self) -> &StreamConfig {
        &self.config
    }

    pub fn state(&self) -> &StreamState {
        &self.state
    }

    pub fn model(&self) -> &'m ModelWeights {
        self.model
    }

    /// Appends `samples` and processes every complete chunk.
    ///
    /// Returns the enhanced mono output for the chunks completed by this call,
    /// which is empty while the framer is still filling.
    pub fn push(&mut self, samples: &Frame) -> Result<Frame> {
        if self.state.poisoned {
            return Err(Error::State(
                "push after flush; reset the stream first".into(),
            ));
        }
        if samples.channels() != self.model.config.input_channels {
            return Err(Error::Shape(format!(
                "stream expects {} channels, got {}",
                self.model.config.input_channels,
                samples.channels()
            )));
        }
        let chunk = self.config.chunk_len;
        self.state.framer.append_time(samples)?;
        let ready = self.state.framer.len() / chunk * chunk;
        let mut out = Frame::zeros(1, 0);
        if ready == 0 {
            return Ok(out);
        }
        for start in (0..ready).step_by(chunk) {
            let block = self.state.framer.slice_time(start, start + chunk);
            let y = self
                .model
                .forward_with_caches(&block, &mut self.state.caches)?;
            out.append_time(&y)?;
        }
        let total = self.state.framer.len();
        self.state.framer = self.state.framer.slice_time(ready, total);
        self.state.emitted += ready as u64;
        Ok(out)
    }

    /// Zero-pads and processes the pending remainder. See [`Stream::flush_with`].
    pub fn flush(&mut self) -> Result<Frame> {
        self.flush_with(0.0)
    }

    /// Pads the pending remainder to a full chunk with `pad_value`, processes
    /// it, and returns only the samples that correspond to real input. The
    /// stream rejects further pushes until [`Stream::reset`].
    pub fn flush_with(&mut self, pad_value: f32) -> Result<Frame> {
        if self.state.poisoned {
            return Err(Error::State("stream already flushed".into()));
        }
        self.state.poisoned = true;
        let real = self.state.framer.len();
        if real == 0 {
            return Ok(Frame::zeros(1, 0));
        }
        let channels = self.state.framer.channels();
        let chunk = self.config.chunk_len;
        let pad = Frame::new(
            channels,
            chunk - real,
            vec![pad_value; channels * (chunk - real)],
        )?;
        let mut block = std::mem::replace(&mut self.state.framer, Frame::zeros(channels, 0));
        block.append_time(&pad)?;
        let y = self
            .model
            .forward_with_caches(&block, &mut self.state.caches)?;
        self.state.emitted += real as u64;
        Ok(y.slice_time(0, real))
    }

    pub fn reset(&mut self) {
        self.state.reset();
    }
}

/// Largest absolute difference between offline inference and a chunked stream
/// over the same input.
pub fn verify_streaming_equivalence(
    model: &ModelWeights,
    input: &Frame,
    chunk_len: usize,
) -> Result<f32> {
    let min = model.config.min_chunk_len();
    if input.is_empty() || !input.len().is_multiple_of(min) {
        return Err(Error::Contract(format!(
            "input length {} is not a positive multiple of {min}",
            input.len()
        )));
    }
    let offline = model.forward_offline(input)?;
    let mut stream = Stream::new(model, StreamConfig::with_chunk(chunk_len))?;
    let mut streamed = Frame::zeros(1, 0);
    for start in (0..input.len()).step_by(chunk_len) {
        let end = (start + chunk_len).min(input.len());
        streamed.append_time(&stream.push(&input.slice_time(start, end))?)?;
    }
    streamed.append_time(&stream.flush()?)?;
    max_abs_diff(&offline, &streamed)
}

pub(crate) fn max_abs_diff(a: &Frame, b: &Frame) -> Result<f32> {
    if a.channels() != b.channels() || a.len() != b.len() {
        return Err(Error::Shape(format!(
            "cannot compare {}x{} with {}x{}",
            a.channels(),
            a.len(),
            b.channels(),
            b.len()
        )));
    }
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f32::max))
}

//! The TC Wave-U-Net graph.
//!
//! Encoder level `i` runs a temporal-convolution block at `2^-i` of the input
//! rate, taps its output as the skip connection and then decimates. A causal
//! bottleneck convolution sits at the lowest rate. Decoder level `i` upsamples,
//! gates the projected skip features with an attention mask computed from both
//! paths, concatenates and runs its own TC block. A final attention gate over
//! the reference microphone feeds a pointwise output layer.
//!
//! The same [`ModelWeights::forward_with_caches`] drives offline and streaming
//! inference; offline is a single call over the whole signal with fresh caches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{
    batchnorm_inplace, causal_conv1d, concat_channels, decimate2, pointwise_conv1d, prelu_inplace,
    upsample2_causal, BatchNorm, Conv1d, ConvSpec, Frame, LayerCache, Pointwise,
};

/// Initial PReLU slope.
pub const PRELU_INIT: f32 = 0.25;

/// Hyperparameters of the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub num_levels: usize,
    pub encoder_kernel: usize,
    pub decoder_kernel: usize,
    /// Encoder channel widths, input first. The decoder walks it in reverse.
    pub channel_ladder: Vec<usize>,
    pub bottleneck_channels: usize,
    pub dilations: Vec<usize>,
    pub bn_eps: f32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_channels: 8,
            num_levels: 9,
            encoder_kernel: 15,
            decoder_kernel: 5,
            channel_ladder: vec![8, 24, 48, 72, 96, 120, 144, 168, 192, 216],
            bottleneck_channels: 240,
            dilations: vec![1, 1, 1, 2, 4, 8, 16, 32, 64],
            bn_eps: 1e-5,
        }
    }
}

/// Result of a successful [`ModelConfig::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfigSummary {
    /// Smallest chunk that survives every decimation: `2^num_levels`.
    pub min_chunk_len: usize,
}

impl ModelConfig {
    /// Checks every invariant and returns all violations at once.
    pub fn validate(&self) -> std::result::Result<ConfigSummary, Vec<String>> {
        let mut errors = Vec::new();
        if self.input_channels == 0 {
            errors.push("input_channels must be positive".to_string());
        }
        if self.num_levels == 0 || self.num_levels > 20 {
            errors.push(format!("num_levels {} outside 1..=20", self.num_levels));
        }
        if self.encoder_kernel == 0 || self.decoder_kernel == 0 {
            errors.push("kernel sizes must be positive".to_string());
        }
        if self.channel_ladder.len() != self.num_levels + 1 {
            errors.push(format!(
                "ladder length {} != num_levels + 1 = {}",
                self.channel_ladder.len(),
                self.num_levels + 1
            ));
        }
        if self.channel_ladder.first() != Some(&self.input_channels) {
            errors.push(format!(
                "channel_ladder[0] {:?} != input_channels {}",
                self.channel_ladder.first(),
                self.input_channels
            ));
        }
        if self.channel_ladder.contains(&0) || self.bottleneck_channels == 0 {
            errors.push("channel widths must be positive".to_string());
        }
        if self.dilations.len() != self.num_levels {
            errors.push(format!(
                "dilations length {} != num_levels {}",
                self.dilations.len(),
                self.num_levels
            ));
        }
        if self.dilations.contains(&0) {
            errors.push("dilations must be positive".to_string());
        }
        if !(self.bn_eps >= 0.0 && self.bn_eps.is_finite()) {
            errors.push(format!(
                "bn_eps {} must be finite and non-negative",
                self.bn_eps
            ));
        }
        if errors.is_empty() {
            Ok(ConfigSummary {
                min_chunk_len: self.min_chunk_len(),
            })
        } else {
            Err(errors)
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        self.validate()
            .map(|_| ())
            .map_err(|e| Error::Config(e.join("; ")))
    }

    pub fn min_chunk_len(&self) -> usize {
        1 << self.num_levels
    }

    /// Channel count entering decoder level `level` from below.
    fn up_channels(&self, level: usize) -> usize {
        if level + 1 == self.num_levels {
            self.bottleneck_channels
        } else {
            self.channel_ladder[level + 1]
        }
    }

    fn encoder_spec(&self, level: usize) -> ConvSpec {
        ConvSpec {
            in_channels: self.channel_ladder[level],
            out_channels: self.channel_ladder[level + 1],
            kernel_size: self.encoder_kernel,
            dilation: self.dilations[level],
        }
    }

    fn bottleneck_spec(&self) -> ConvSpec {
        ConvSpec {
            in_channels: self.channel_ladder[self.num_levels],
            out_channels: self.bottleneck_channels,
            kernel_size: self.encoder_kernel,
            dilation: 1,
        }
    }

    fn decoder_spec(&self, level: usize) -> ConvSpec {
        ConvSpec {
            in_channels: self.up_channels(level) + self.channel_ladder[level + 1],
            out_channels: self.channel_ladder[level],
            kernel_size: self.decoder_kernel,
            dilation: self.dilations[level],
        }
    }
}

/// Residual temporal-convolution block.
#[derive(Debug, Clone, PartialEq)]
pub struct TcBlock {
    pub conv1: Conv1d,
    pub bn1: BatchNorm,
    pub prelu1: Vec<f32>,
    pub conv2: Pointwise,
    /// Present when the block changes the channel count.
    pub residual: Option<Pointwise>,
    pub prelu_out: Vec<f32>,
}

/// Additive attention gate.
///
/// `key` reads the decoder path, `query` and `value` read the gated path.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub key: Pointwise,
    pub query: Pointwise,
    pub value: Pointwise,
    pub prelu: Vec<f32>,
    pub mask: Pointwise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bottleneck {
    pub conv: Conv1d,
    pub prelu: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLevel {
    pub skip_conv: Pointwise,
    pub attention: Attention,
    pub block: TcBlock,
}

/// Full parameter set. `encoder[i]` and `decoder[i]` both run at level `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub encoder: Vec<TcBlock>,
    pub bottleneck: Bottleneck,
    pub decoder: Vec<DecoderLevel>,
    /// Projects the reference microphone to the final attention width.
    pub reference_proj: Pointwise,
    pub final_attention: Attention,
    pub output_conv: Pointwise,
}

/// What a parameter tensor is, for initialization and accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Weight { fan_in: usize },
    Bias { fan_in: usize },
    BnGamma,
    BnBeta,
    BnMean,
    BnVar,
    PreluAlpha,
}

impl TensorKind {
    /// Running statistics are buffers, not trainable parameters.
    pub fn is_trainable(self) -> bool {
        !matches!(self, TensorKind::BnMean | TensorKind::BnVar)
    }
}

/// Borrowed view of one named tensor.
#[derive(Debug, Clone, Copy)]
pub struct TensorRef<'a> {
    pub name: &'a str,
    pub shape: &'a [usize],
    pub kind: TensorKind,
    pub data: &'a [f32],
}

trait Visitor {
    fn visit(&mut self, name: &str, shape: &[usize], kind: TensorKind, data: &[f32]);
}

trait VisitorMut {
    fn visit(&mut self, name: &str, shape: &[usize], kind: TensorKind, data: &mut Vec<f32>);
}

impl<F: FnMut(&str, &[usize], TensorKind, &[f32])> Visitor for F {
    fn visit(&mut self, name: &str, shape: &[usize], kind: TensorKind, data: &[f32]) {
        self(name, shape, kind, data)
    }
}

impl<F: FnMut(&str, &[usize], TensorKind, &mut Vec<f32>)> VisitorMut for F {
    fn visit(&mut self, name: &str, shape: &[usize], kind: TensorKind, data: &mut Vec<f32>) {
        self(name, shape, kind, data)
    }
}

// Tensor walks. Each `visit_*` pair must list the same tensors in the same order.

fn visit_conv(p: &str, c: &Conv1d, v: &mut dyn Visitor) {
    let s = c.spec;
    let fan_in = s.in_channels * s.kernel_size;
    v.visit(
        &format!("{p}.weight"),
        &[s.out_channels, s.in_channels, s.kernel_size],
        TensorKind::Weight { fan_in },
        &c.weight,
    );
    v.visit(
        &format!("{p}.bias"),
        &[s.out_channels],
        TensorKind::Bias { fan_in },
        &c.bias,
    );
}

fn visit_conv_mut(p: &str, c: &mut Conv1d, v: &mut dyn VisitorMut) {
    let s = c.spec;
    let fan_in = s.in_channels * s.kernel_size;
    v.visit(
        &format!("{p}.weight"),
        &[s.out_channels, s.in_channels, s.kernel_size],
        TensorKind::Weight { fan_in },
        &mut c.weight,
    );
    v.visit(
        &format!("{p}.bias"),
        &[s.out_channels],
        TensorKind::Bias { fan_in },
        &mut c.bias,
    );
}

fn visit_pw(p: &str, c: &Pointwise, v: &mut dyn Visitor) {
    let fan_in = c.in_channels;
    v.visit(
        &format!("{p}.weight"),
        &[c.out_channels, c.in_channels],
        TensorKind::Weight { fan_in },
        &c.weight,
    );
    v.visit(
        &format!("{p}.bias"),
        &[c.out_channels],
        TensorKind::Bias { fan_in },
        &c.bias,
    );
}

fn visit_pw_mut(p: &str, c: &mut Pointwise, v: &mut dyn VisitorMut) {
    let fan_in = c.in_channels;
    v.visit(
        &format!("{p}.weight"),
        &[c.out_channels, c.in_channels],
        TensorKind::Weight { fan_in },
        &mut c.weight,
    );
    v.visit(
        &format!("{p}.bias"),
        &[c.out_channels],
        TensorKind::Bias { fan_in },
        &mut c.bias,
    );
}

fn visit_bn(p: &str, b: &BatchNorm, v: &mut dyn Visitor) {
    let sh = [b.gamma.len()];
    v.visit(&format!("{p}.gamma"), &sh, TensorKind::BnGamma, &b.gamma);
    v.visit(&format!("{p}.beta"), &sh, TensorKind::BnBeta, &b.beta);
    v.visit(
        &format!("{p}.running_mean"),
        &sh,
        TensorKind::BnMean,
        &b.running_mean,
    );
    v.visit(
        &format!("{p}.running_var"),
        &sh,
        TensorKind::BnVar,
        &b.running_var,
    );
}

fn visit_bn_mut(p: &str, b: &mut BatchNorm, v: &mut dyn VisitorMut) {
    let sh = [b.gamma.len()];
    v.visit(
        &format!("{p}.gamma"),
        &sh,
        TensorKind::BnGamma,
        &mut b.gamma,
    );
    v.visit(&format!("{p}.beta"), &sh, TensorKind::BnBeta, &mut b.beta);
    v.visit(
        &format!("{p}.running_mean"),
        &sh,
        TensorKind::BnMean,
        &mut b.running_mean,
    );
    v.visit(
        &format!("{p}.running_var"),
        &sh,
        TensorKind::BnVar,
        &mut b.running_var,
    );
}

fn visit_block(p: &str, b: &TcBlock, v: &mut dyn Visitor) {
    visit_conv(&format!("{p}.conv1"), &b.conv1, v);
    visit_bn(&format!("{p}.bn1"), &b.bn1, v);
    v.visit(
        &format!("{p}.prelu1"),
        &[b.prelu1.len()],
        TensorKind::PreluAlpha,
        &b.prelu1,
    );
    visit_pw(&format!("{p}.conv2"), &b.conv2, v);
    if let Some(r) = &b.residual {
        visit_pw(&format!("{p}.residual"), r, v);
    }
    let n = b.prelu_out.len();
    v.visit(
        &format!("{p}.prelu_out"),
        &[n],
        TensorKind::PreluAlpha,
        &b.prelu_out,
    );
}

fn visit_block_mut(p: &str, b: &mut TcBlock, v: &mut dyn VisitorMut) {
    visit_conv_mut(&format!("{p}.conv1"), &mut b.conv1, v);
    visit_bn_mut(&format!("{p}.bn1"), &mut b.bn1, v);
    let n = b.prelu1.len();
    v.visit(
        &format!("{p}.prelu1"),
        &[n],
        TensorKind::PreluAlpha,
        &mut b.prelu1,
    );
    visit_pw_mut(&format!("{p}.conv2"), &mut b.conv2, v);
    if let Some(r) = &mut b.residual {
        visit_pw_mut(&format!("{p}.residual"), r, v);
    }
    let n = b.prelu_out.len();
    v.visit(
        &format!("{p}.prelu_out"),
        &[n],
        TensorKind::PreluAlpha,
        &mut b.prelu_out,
    );
}

fn visit_attention(p: &str, a: &Attention, v: &mut dyn Visitor) {
    visit_pw(&format!("{p}.key"), &a.key, v);
    visit_pw(&format!("{p}.query"), &a.query, v);
    visit_pw(&format!("{p}.value"), &a.value, v);
    v.visit(
        &format!("{p}.prelu"),
        &[a.prelu.len()],
        TensorKind::PreluAlpha,
        &a.prelu,
    );
    visit_pw(&format!("{p}.mask"), &a.mask, v);
}

fn visit_attention_mut(p: &str, a: &mut Attention, v: &mut dyn VisitorMut) {
    visit_pw_mut(&format!("{p}.key"), &mut a.key, v);
    visit_pw_mut(&format!("{p}.query"), &mut a.query, v);
    visit_pw_mut(&format!("{p}.value"), &mut a.value, v);
    let n = a.prelu.len();
    v.visit(
        &format!("{p}.prelu"),
        &[n],
        TensorKind::PreluAlpha,
        &mut a.prelu,
    );
    visit_pw_mut(&format!("{p}.mask"), &mut a.mask, v);
}

fn zero_pw(in_channels: usize, out_channels: usize) -> Pointwise {
    Pointwise {
        in_channels,
        out_channels,
        weight: vec![0.0; in_channels * out_channels],
        bias: vec![0.0; out_channels],
    }
}

fn zero_conv(spec: ConvSpec) -> Conv1d {
    Conv1d {
        spec,
        weight: vec![0.0; spec.weight_len()],
        bias: vec![0.0; spec.out_channels],
    }
}

impl TcBlock {
    fn zeros(spec: ConvSpec, eps: f32) -> Self {
        let (cin, cout) = (spec.in_channels, spec.out_channels);
        Self {
            conv1: zero_conv(spec),
            bn1: BatchNorm::identity(cout, eps),
            prelu1: vec![PRELU_INIT; cout],
            conv2: zero_pw(cout, cout),
            residual: (cin != cout).then(|| zero_pw(cin, cout)),
            prelu_out: vec![PRELU_INIT; cout],
        }
    }

    pub fn in_channels(&self) -> usize {
        self.conv1.spec.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.conv1.spec.out_channels
    }
}

impl Attention {
    /// Gate of width `gated` driven by a `driver`-channel decoder path.
    fn zeros(driver: usize, gated: usize) -> Self {
        let embed = gated;
        Self {
            key: zero_pw(driver, embed),
            query: zero_pw(gated, embed),
            value: zero_pw(gated, gated),
            prelu: vec![PRELU_INIT; embed],
            mask: zero_pw(embed, gated),
        }
    }
}

impl ModelWeights {
    /// Zero convolutions, identity batch norm, default PReLU slopes.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.check()?;
        let levels = config.num_levels;
        let eps = config.bn_eps;
        let encoder = (0..levels)
            .map(|i| TcBlock::zeros(config.encoder_spec(i), eps))
            .collect();
        let bspec = config.bottleneck_spec();
        let bottleneck = Bottleneck {
            conv: zero_conv(bspec),
            prelu: vec![PRELU_INIT; bspec.out_channels],
        };
        let decoder = (0..levels)
            .map(|i| {
                let skip = config.channel_ladder[i + 1];
                DecoderLevel {
                    skip_conv: zero_pw(skip, skip),
                    attention: Attention::zeros(config.up_channels(i), skip),
                    block: TcBlock::zeros(config.decoder_spec(i), eps),
                }
            })
            .collect();
        let top = config.channel_ladder[0];
        Ok(Self {
            config: config.clone(),
            encoder,
            bottleneck,
            decoder,
            reference_proj: zero_pw(1, top),
            final_attention: Attention::zeros(top, top),
            output_conv: zero_pw(2 * top, 1),
        })
    }

    /// Seeded initialization: weights and biases uniform in `±1/sqrt(fan_in)`,
    /// batch-norm statistics mean 0 / var 1, PReLU slopes 0.25.
    pub fn init_random(config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        model.visit_mut(
            &mut |_: &str, _: &[usize], kind: TensorKind, data: &mut Vec<f32>| match kind {
                TensorKind::Weight { fan_in } | TensorKind::Bias { fan_in } => {
                    let bound = 1.0 / (fan_in as f32).sqrt();
                    for v in data.iter_mut() {
                        *v = rng.gen_range(-bound..=bound);
                    }
                }
                TensorKind::BnGamma | TensorKind::BnVar => data.fill(1.0),
                TensorKind::BnBeta | TensorKind::BnMean => data.fill(0.0),
                TensorKind::PreluAlpha => data.fill(PRELU_INIT),
            },
        );
        Ok(model)
    }

    fn visit(&self, v: &mut dyn Visitor) {
        for (i, b) in self.encoder.iter().enumerate() {
            visit_block(&format!("encoder.{i}"), b, v);
        }
        visit_conv("bottleneck.conv", &self.bottleneck.conv, v);
        let n = self.bottleneck.prelu.len();
        v.visit(
            "bottleneck.prelu",
            &[n],
            TensorKind::PreluAlpha,
            &self.bottleneck.prelu,
        );
        for (i, d) in self.decoder.iter().enumerate() {
            visit_pw(&format!("decoder.{i}.skip_conv"), &d.skip_conv, v);
            visit_attention(&format!("decoder.{i}.attention"), &d.attention, v);
            visit_block(&format!("decoder.{i}.block"), &d.block, v);
        }
        visit_pw("reference_proj", &self.reference_proj, v);
        visit_attention("final_attention", &self.final_attention, v);
        visit_pw("output_conv", &self.output_conv, v);
    }

    fn visit_mut(&mut self, v: &mut dyn VisitorMut) {
        for (i, b) in self.encoder.iter_mut().enumerate() {
            visit_block_mut(&format!("encoder.{i}"), b, v);
        }
        visit_conv_mut("bottleneck.conv", &mut self.bottleneck.conv, v);
        let n = self.bottleneck.prelu.len();
        v.visit(
            "bottleneck.prelu",
            &[n],
            TensorKind::PreluAlpha,
            &mut self.bottleneck.prelu,
        );
        for (i, d) in self.decoder.iter_mut().enumerate() {
            visit_pw_mut(&format!("decoder.{i}.skip_conv"), &mut d.skip_conv, v);
            visit_attention_mut(&format!("decoder.{i}.attention"), &mut d.attention, v);
            visit_block_mut(&format!("decoder.{i}.block"), &mut d.block, v);
        }
        visit_pw_mut("reference_proj", &mut self.reference_proj, v);
        visit_attention_mut("final_attention", &mut self.final_attention, v);
        visit_pw_mut("output_conv", &mut self.output_conv, v);
    }

    /// Calls `f` for every tensor in graph order.
    pub fn for_each_tensor(&self, mut f: impl FnMut(TensorRef<'_>)) {
        self.visit(
            &mut |name: &str, shape: &[usize], kind: TensorKind, data: &[f32]| {
                f(TensorRef {
                    name,
                    shape,
                    kind,
                    data,
                })
            },
        );
    }

    /// Mutable walk used by loaders: `f(name, shape, data)`.
    pub fn try_for_each_tensor_mut(
        &mut self,
        mut f: impl FnMut(&str, &[usize], &mut Vec<f32>) -> Result<()>,
    ) -> Result<()> {
        let mut first_err = None;
        self.visit_mut(
            &mut |name: &str, shape: &[usize], _: TensorKind, data: &mut Vec<f32>| {
                if first_err.is_none() {
                    if let Err(e) = f(name, shape, data) {
                        first_err = Some(e);
                    }
                }
            },
        );
        first_err.map_or(Ok(()), Err)
    }

    /// Trainable parameter count (excludes batch-norm running statistics).
    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.for_each_tensor(|t| {
            if t.kind.is_trainable() {
                n += t.data.len();
            }
        });
        n
    }

    /// Every stored float, trainable or not.
    pub fn stored_value_count(&self) -> usize {
        let mut n = 0;
        self.for_each_tensor(|t| n += t.data.len());
        n
    }

    /// Errors on the first NaN or infinite value.
    pub fn check_finite(&self) -> Result<()> {
        let mut bad = None;
        self.for_each_tensor(|t| {
            if bad.is_none() && t.data.iter().any(|v| !v.is_finite()) {
                bad = Some(t.name.to_string());
            }
        });
        match bad {
            Some(name) => Err(Error::Data(format!(
                "tensor {name} holds a non-finite value"
            ))),
            None => Ok(()),
        }
    }

    /// Full-utterance inference from zero context.
    pub fn forward_offline(&self, input: &Frame) -> Result<Frame> {
        if input.is_empty() {
            return Err(Error::Contract("offline input must be non-empty".into()));
        }
        let mut caches = NetworkCaches::new(&self.config);
        self.forward_with_caches(input, &mut caches)
    }

    /// Runs one block of samples, reading and updating every layer cache.
    ///
    /// `input.len()` must be a multiple of `2^num_levels` so that every level
    /// sees an even-length, even-aligned block.
    pub fn forward_with_caches(&self, input: &Frame, caches: &mut NetworkCaches) -> Result<Frame> {
        let cfg = &self.config;
        if input.channels() != cfg.input_channels {
            return Err(Error::Shape(format!(
                "model expects {} input channels, got {}",
                cfg.input_channels,
                input.channels()
            )));
        }
        let min = cfg.min_chunk_len();
        if !input.len().is_multiple_of(min) {
            return Err(Error::Contract(format!(
                "input length {} is not a multiple of {min}",
                input.len()
            )));
        }
        if !caches.fits(cfg) {
            return Err(Error::Config("cache stack does not match model".into()));
        }

        let levels = cfg.num_levels;
        let mut skips = Vec::with_capacity(levels);
        let mut x = input.clone();
        for (i, block) in self.encoder.iter().enumerate() {
            let y = tc_block_forward(&x, block, Some(&mut caches.encoder[i]))?;
            x = decimate2(&y)?;
            skips.push(y);
        }

        let mut x = causal_conv1d(&x, &self.bottleneck.conv, Some(&mut caches.bottleneck))?;
        prelu_inplace(&mut x, &self.bottleneck.prelu)?;

        for i in (0..levels).rev() {
            let level = &self.decoder[i];
            let skip = skips.pop().expect("one skip per level");
            let up = upsample2_causal(&x, &mut caches.upsample[i])?;
            let skip = pointwise_conv1d(&skip, &level.skip_conv)?;
            let gated = attention_forward(&up, &skip, &level.attention)?;
            let joined = concat_channels(&up, &gated)?;
            x = tc_block_forward(&joined, &level.block, Some(&mut caches.decoder[i]))?;
        }

        let reference = pointwise_conv1d(&input.channel(0), &self.reference_proj)?;
        let gated = attention_forward(&x, &reference, &self.final_attention)?;
        let joined = concat_channels(&x, &gated)?;
        pointwise_conv1d(&joined, &self.output_conv)
    }
}

/// `PReLU_out(conv2(PReLU1(BN1(conv1(x)))) + residual(x))`.
///
/// Dropout sits between PReLU1 and conv2 during training and is the identity
/// at inference.
pub fn tc_block_forward(
    x: &Frame,
    block: &TcBlock,
    cache: Option<&mut LayerCache>,
) -> Result<Frame> {
    let mut h = causal_conv1d(x, &block.conv1, cache)?;
    batchnorm_inplace(&mut h, &block.bn1)?;
    prelu_inplace(&mut h, &block.prelu1)?;
    let mut y = pointwise_conv1d(&h, &block.conv2)?;
    match &block.residual {
        Some(proj) => y.add_assign(&pointwise_conv1d(x, proj)?)?,
        None => y.add_assign(x)?,
    }
    prelu_inplace(&mut y, &block.prelu_out)?;
    Ok(y)
}

pub(crate) fn sigmoid(v: f32) -> f32 {
    1.0 / (1.0 + (-v).exp())
}

/// Gates `d` by a mask computed from both inputs:
/// `P = PReLU(key(u) + query(d))`, `W = sigmoid(mask(P)) ⊙ value(d)`.
pub fn attention_forward(u: &Frame, d: &Frame, att: &Attention) -> Result<Frame> {
    if u.len() != d.len() {
        return Err(Error::Shape(format!(
            "attention inputs differ in length: {} vs {}",
            u.len(),
            d.len()
        )));
    }
    let mut p = pointwise_conv1d(u, &att.key)?;
    p.add_assign(&pointwise_conv1d(d, &att.query)?)?;
    prelu_inplace(&mut p, &att.prelu)?;
    let mut mask = pointwise_conv1d(&p, &att.mask)?;
    for v in mask.data_mut() {
        *v = sigmoid(*v);
    }
    let mut w = pointwise_conv1d(d, &att.value)?;
    if w.channels() != mask.channels() {
        return Err(Error::Shape(format!(
            "mask width {} != value width {}",
            mask.channels(),
            w.channels()
        )));
    }
    for (o, m) in w.data_mut().iter_mut().zip(mask.data()) {
        *o *= *m;
    }
    Ok(w)
}

/// Kind of a stateful layer in the cache stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheSlot {
    Encoder(usize),
    Bottleneck,
    Upsample(usize),
    Decoder(usize),
}

/// Every history cache of the graph, one per stateful layer, each at its
/// layer's local rate.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCaches {
    pub encoder: Vec<LayerCache>,
    pub bottleneck: LayerCache,
    pub upsample: Vec<LayerCache>,
    pub decoder: Vec<LayerCache>,
}

impl NetworkCaches {
    pub fn new(config: &ModelConfig) -> Self {
        let levels = config.num_levels;
        Self {
            encoder: (0..levels)
                .map(|i| LayerCache::for_conv(&config.encoder_spec(i)))
                .collect(),
            bottleneck: LayerCache::for_conv(&config.bottleneck_spec()),
            upsample: (0..levels)
                .map(|i| LayerCache::zeros(config.up_channels(i), 1))
                .collect(),
            decoder: (0..levels)
                .map(|i| LayerCache::for_conv(&config.decoder_spec(i)))
                .collect(),
        }
    }

    fn fits(&self, config: &ModelConfig) -> bool {
        let levels = config.num_levels;
        self.encoder.len() == levels
            && self.upsample.len() == levels
            && self.decoder.len() == levels
    }

    /// Caches in the order the forward pass touches them.
    pub fn graph_order(&self) -> Vec<(CacheSlot, &LayerCache)> {
        let mut out: Vec<_> = self
            .encoder
            .iter()
            .enumerate()
            .map(|(i, c)| (CacheSlot::Encoder(i), c))
            .collect();
        out.push((CacheSlot::Bottleneck, &self.bottleneck));
        for i in (0..self.decoder.len()).rev() {
            out.push((CacheSlot::Upsample(i), &self.upsample[i]));
            out.push((CacheSlot::Decoder(i), &self.decoder[i]));
        }
        out
    }

    pub fn conv_cache_count(&self) -> usize {
        self.encoder.len() + 1 + self.decoder.len()
    }

    pub fn upsample_cache_count(&self) -> usize {
        self.upsample.len()
    }

    pub fn reset(&mut self) {
        self.encoder
            .iter_mut()
            .chain(std::iter::once(&mut self.bottleneck))
            .chain(self.upsample.iter_mut())
            .chain(self.decoder.iter_mut())
            .for_each(LayerCache::reset);
    }

    pub fn is_zero(&self) -> bool {
        self.graph_order().iter().all(|(_, c)| c.is_zero())
    }

    /// Total cached floats.
    pub fn total_len(&self) -> usize {
        self.graph_order().iter().map(|(_, c)| c.data().len()).sum()
    }
}

/// Receptive field under two accountings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceptiveField {
    /// `1 + (encoder_kernel - 1) * Σ dilations`: the encoder's dilated stack
    /// counted as if every block ran at the input rate.
    pub dilated_stack: usize,
    /// Exact span of input samples that can reach one output sample through
    /// the full graph with decimation, upsampling and the decoder, maximized
    /// over input phase. Assumes dense weights.
    pub decimation_aware: usize,
}

/// Both receptive-field figures for `config`.
pub fn analytic_receptive_field(config: &ModelConfig) -> Result<ReceptiveField> {
    config.check()?;
    let sum_dil: usize = config.dilations.iter().sum();
    let dilated_stack = 1 + (config.encoder_kernel - 1) * sum_dil;
    let phases = config.min_chunk_len();
    let decimation_aware = (0..phases)
        .map(|p| support::max_reach(config, p) - p + 1)
        .max()
        .expect("at least one phase");
    Ok(ReceptiveField {
        dilated_stack,
        decimation_aware,
    })
}

/// Structural impulse propagation over sets of sample indices, kept as sorted
/// disjoint closed intervals.
mod support {
    use super::ModelConfig;

    type Set = Vec<(usize, usize)>;

    fn normalize(mut v: Set) -> Set {
        v.sort_unstable();
        let mut out: Set = Vec::with_capacity(v.len());
        for (a, b) in v {
            match out.last_mut() {
                Some(last) if a <= last.1 + 1 => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        out
    }

    fn union(a: &Set, b: &Set) -> Set {
        normalize(a.iter().chain(b).copied().collect())
    }

    /// Causal dilated conv: output t sees t - j*d for j in 0..kernel.
    fn conv(s: &Set, kernel: usize, dilation: usize) -> Set {
        let mut v = Vec::with_capacity(s.len() * kernel);
        for &(a, b) in s {
            for j in 0..kernel {
                v.push((a + j * dilation, b + j * dilation));
            }
        }
        normalize(v)
    }

    /// Keeps even indices: output m sees input 2m.
    fn decimate(s: &Set) -> Set {
        normalize(
            s.iter()
                .filter_map(|&(a, b)| {
                    let lo = a.div_ceil(2);
                    let hi = b / 2;
                    (lo <= hi && 2 * lo <= b).then_some((lo, hi))
                })
                .collect(),
        )
    }

    /// Output 2m sees inputs m-1 and m; output 2m+1 sees m.
    fn upsample(s: &Set) -> Set {
        normalize(s.iter().map(|&(a, b)| (2 * a, 2 * b + 2)).collect())
    }

    /// Largest output index an impulse at input `p` can reach.
    pub(super) fn max_reach(cfg: &ModelConfig, p: usize) -> usize {
        let impulse: Set = vec![(p, p)];
        let mut x = impulse.clone();
        let mut skips = Vec::new();
        for i in 0..cfg.num_levels {
            // The residual path only adds the unshifted input, already inside
            // the conv's support because tap 0 is the current sample.
            let y = conv(&x, cfg.encoder_kernel, cfg.dilations[i]);
            x = decimate(&y);
            skips.push(y);
        }
        x = conv(&x, cfg.encoder_kernel, 1);
        for i in (0..cfg.num_levels).rev() {
            let up = upsample(&x);
            let joined = union(&up, &skips.pop().expect("skip"));
            x = conv(&joined, cfg.decoder_kernel, cfg.dilations[i]);
        }
        let out = union(&x, &impulse);
        out.last().expect("non-empty support").1
    }

}

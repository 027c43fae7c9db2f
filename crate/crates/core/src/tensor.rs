//! One-dimensional signal kernels.
//!
//! Every primitive the network graph composes lives here. Kernels that look
//! into the past (the dilated causal convolution and the causal upsampler)
//! take a [`LayerCache`] holding the trailing context of the previous call;
//! the offline form is the same computation started from an all-zero cache,
//! so chunked and whole-signal processing agree sample for sample.
//!
//! Inner loops run over time with a fixed tap/channel order per output sample.
//! That order does not depend on how the signal is partitioned, which is what
//! makes streamed output bit-identical to offline output.

use crate::error::{Error, Result};

/// A `channels × len` block of `f32` samples in channel-major layout.
///
/// Sample `(c, t)` lives at `data[c * len + t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    channels: usize,
    len: usize,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(channels: usize, len: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * len {
            return Err(Error::Shape(format!(
                "frame {channels}x{len} needs {} samples, got {}",
                channels * len,
                data.len()
            )));
        }
        Ok(Self {
            channels,
            len,
            data,
        })
    }

    pub fn zeros(channels: usize, len: usize) -> Self {
        Self {
            channels,
            len,
            data: vec![0.0; channels * len],
        }
    }

    /// Builds a frame from per-channel rows of equal length.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let len = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * len);
        for (c, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != len {
                return Err(Error::Shape(format!(
                    "row {c} has length {}, expected {len}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), len, data)
    }

    /// Single-channel frame.
    pub fn mono(samples: Vec<f32>) -> Self {
        let len = samples.len();
        Self {
            channels: 1,
            len,
            data: samples,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn row(&self, c: usize) -> &[f32] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn row_mut(&mut self, c: usize) -> &mut [f32] {
        &mut self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn get(&self, c: usize, t: usize) -> f32 {
        self.data[c * self.len + t]
    }

    pub fn set(&mut self, c: usize, t: usize, v: f32) {
        self.data[c * self.len + t] = v;
    }

    /// Copies samples `start..end` of every channel.
    pub fn slice_time(&self, start: usize, end: usize) -> Frame {
        assert!(start <= end && end <= self.len, "time slice out of range");
        let len = end - start;
        let mut data = Vec::with_capacity(self.channels * len);
        for c in 0..self.channels {
            data.extend_from_slice(&self.row(c)[start..end]);
        }
        Frame {
            channels: self.channels,
            len,
            data,
        }
    }

    /// Extracts one channel as a mono frame.
    pub fn channel(&self, c: usize) -> Frame {
        Frame::mono(self.row(c).to_vec())
    }

    /// Appends `other` along the time axis.
    pub fn append_time(&mut self, other: &Frame) -> Result<()> {
        if self.channels != other.channels {
            return Err(Error::Shape(format!(
                "cannot append {} channels to {}",
                other.channels, self.channels
            )));
        }
        if other.len == 0 {
            return Ok(());
        }
        let new_len = self.len + other.len;
        let mut data = Vec::with_capacity(self.channels * new_len);
        for c in 0..self.channels {
            data.extend_from_slice(self.row(c));
            data.extend_from_slice(other.row(c));
        }
        self.len = new_len;
        self.data = data;
        Ok(())
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Frame) -> Result<()> {
        if self.channels != other.channels || self.len != other.len {
            return Err(Error::Shape(format!(
                "cannot add {}x{} to {}x{}",
                other.channels, other.len, self.channels, self.len
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Shape of a dilated causal convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub dilation: usize,
}

impl ConvSpec {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        dilation: usize,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel_size == 0 || dilation == 0 {
            return Err(Error::Config(format!(
                "conv spec fields must be positive: in={in_channels} out={out_channels} \
                 kernel={kernel_size} dilation={dilation}"
            )));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel_size,
            dilation,
        })
    }

    /// Samples of left context the convolution needs: `(kernel_size - 1) * dilation`.
    pub fn history_len(&self) -> usize {
        (self.kernel_size - 1) * self.dilation
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel_size
    }
}

/// Trailing context of one stateful layer, `channels × history_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCache {
    channels: usize,
    history_len: usize,
    data: Vec<f32>,
}

impl LayerCache {
    pub fn zeros(channels: usize, history_len: usize) -> Self {
        Self {
            channels,
            history_len,
            data: vec![0.0; channels * history_len],
        }
    }

    /// Cache sized for `spec`; its length is asserted against the padding rule.
    pub fn for_conv(spec: &ConvSpec) -> Self {
        let cache = Self::zeros(spec.in_channels, spec.history_len());
        assert_eq!(
            cache.history_len,
            (spec.kernel_size - 1) * spec.dilation,
            "cache length must equal (kernel_size - 1) * dilation"
        );
        cache
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn history_len(&self) -> usize {
        self.history_len
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, c: usize) -> &[f32] {
        &self.data[c * self.history_len..(c + 1) * self.history_len]
    }

    pub fn reset(&mut self) {
        self.data.fill(0.0);
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Replaces the cache with the trailing `history_len` samples of
    /// `cache ∥ input`.
    fn push_tail(&mut self, input: &Frame) {
        let h = self.history_len;
        let n = input.len();
        if h == 0 || n == 0 {
            return;
        }
        for c in 0..self.channels {
            let row = &mut self.data[c * h..(c + 1) * h];
            let x = input.row(c);
            if n >= h {
                row.copy_from_slice(&x[n - h..]);
            } else {
                row.copy_within(n.., 0);
                row[h - n..].copy_from_slice(x);
            }
        }
    }
}

/// Dilated causal convolution weights, `out × in × kernel` plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub spec: ConvSpec,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Conv1d {
    pub fn new(spec: ConvSpec, weight: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if weight.len() != spec.weight_len() || bias.len() != spec.out_channels {
            return Err(Error::Config(format!(
                "conv {}->{} k={} expects {} weights and {} biases, got {} and {}",
                spec.in_channels,
                spec.out_channels,
                spec.kernel_size,
                spec.weight_len(),
                spec.out_channels,
                weight.len(),
                bias.len()
            )));
        }
        Ok(Self { spec, weight, bias })
    }
}

/// Kernel-size-1 convolution, `out × in` plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Pointwise {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Pointwise {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        weight: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self> {
        if weight.len() != in_channels * out_channels || bias.len() != out_channels {
            return Err(Error::Config(format!(
                "pointwise {in_channels}->{out_channels} expects {} weights and {out_channels} \
                 biases, got {} and {}",
                in_channels * out_channels,
                weight.len(),
                bias.len()
            )));
        }
        Ok(Self {
            in_channels,
            out_channels,
            weight,
            bias,
        })
    }
}

/// Inference-mode batch normalization with frozen statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub eps: f32,
}

impl BatchNorm {
    /// Identity statistics: gamma 1, beta 0, mean 0, var 1.
    pub fn identity(channels: usize, eps: f32) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// Dilated causal convolution producing an output as long as its input.
///
/// Without a cache the left context is zeros. With a cache the left context is
/// the cache contents, and the cache is then replaced by the trailing
/// `history_len` samples of `cache ∥ input`. An empty input returns an empty
/// frame and leaves the cache untouched.
pub fn causal_conv1d(
    input: &Frame,
    conv: &Conv1d,
    cache: Option<&mut LayerCache>,
) -> Result<Frame> {
    let spec = &conv.spec;
    if input.channels() != spec.in_channels {
        return Err(Error::Config(format!(
            "conv expects {} input channels, got {}",
            spec.in_channels,
            input.channels()
        )));
    }
    let h = spec.history_len();
    if let Some(cache) = cache.as_deref() {
        if cache.channels != spec.in_channels || cache.history_len != h {
            return Err(Error::Config(format!(
                "cache {}x{} does not fit conv needing {}x{h}",
                cache.channels, cache.history_len, spec.in_channels
            )));
        }
    }
    let len = input.len();
    if len == 0 {
        return Ok(Frame::zeros(spec.out_channels, 0));
    }

    let (cin, k, d) = (spec.in_channels, spec.kernel_size, spec.dilation);
    // im2col: row (ic * k + j) holds input channel ic shifted by tap j, so
    // the weight tensor is already the row-major left operand.
    let mut cols = vec![0.0f32; cin * k * len];
    for ic in 0..cin {
        let x = input.row(ic);
        let hist = cache.as_deref().map(|c| c.row(ic));
        for j in 0..k {
            let dst = &mut cols[(ic * k + j) * len..][..len];
            // output t reads position t + j*d of (history ∥ input)
            let from_hist = h.saturating_sub(j * d).min(len);
            if let Some(hist) = hist {
                dst[..from_hist].copy_from_slice(&hist[j * d..j * d + from_hist]);
            }
            if from_hist < len {
                let x_start = j * d + from_hist - h;
                dst[from_hist..].copy_from_slice(&x[x_start..x_start + len - from_hist]);
            }
        }
    }
    let mut out = Frame::zeros(spec.out_channels, len);
    gemm_bias(
        &conv.weight,
        spec.out_channels,
        cin * k,
        &cols,
        len,
        &conv.bias,
        out.data_mut(),
    );

    if let Some(cache) = cache {
        cache.push_tail(input);
    }
    Ok(out)
}

/// `c = bias ⊗ 1ᵀ + a · b` for row-major `a: m×k`, `b: k×n`, `c: m×n`.
///
/// Each output element starts from its row bias and accumulates the `k`
/// products strictly in index order, whatever the tiling or instruction set.
/// Tiles only change which elements are computed together, and no fused
/// multiply-add is used, so every path rounds identically.
fn gemm_bias(a: &[f32], m: usize, k: usize, b: &[f32], n: usize, bias: &[f32], c: &mut [f32]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    assert_eq!(bias.len(), m);
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: AVX2 support was just checked.
        unsafe { gemm_avx2(a, m, k, b, n, bias, c) };
        return;
    }
    gemm_blocked::<4, 8>(a, m, k, b, n, bias, c);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn gemm_avx2(
    a: &[f32],
    m: usize,
    k: usize,
    b: &[f32],
    n: usize,
    bias: &[f32],
    c: &mut [f32],
) {
    gemm_blocked::<3, 16>(a, m, k, b, n, bias, c);
}

/// Walks `b` in strips of `C` columns, copying each strip into a contiguous
/// zero-padded panel reused by every row tile.
#[inline(always)]
fn gemm_blocked<const R: usize, const C: usize>(
    a: &[f32],
    m: usize,
    k: usize,
    b: &[f32],
    n: usize,
    bias: &[f32],
    c: &mut [f32],
) {
    let mut panel = vec![0.0f32; k * C];
    for j0 in (0..n).step_by(C) {
        let w = C.min(n - j0);
        for (kk, dst) in panel.chunks_exact_mut(C).enumerate() {
            dst[..w].copy_from_slice(&b[kk * n + j0..kk * n + j0 + w]);
        }
        let mut i0 = 0;
        while i0 + R <= m {
            tile::<R, C>(
                &a[i0 * k..(i0 + R) * k],
                k,
                &panel,
                &bias[i0..i0 + R],
                c,
                n,
                i0,
                j0,
                w,
            );
            i0 += R;
        }
        while i0 < m {
            tile::<1, C>(
                &a[i0 * k..(i0 + 1) * k],
                k,
                &panel,
                &bias[i0..i0 + 1],
                c,
                n,
                i0,
                j0,
                w,
            );
            i0 += 1;
        }
    }
}

/// `R` rows of `a` against one `k×C` panel; writes the first `w` columns.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn tile<const R: usize, const C: usize>(
    a_rows: &[f32],
    k: usize,
    panel: &[f32],
    bias: &[f32],
    c: &mut [f32],
    n: usize,
    i0: usize,
    j0: usize,
    w: usize,
) {
    assert_eq!(a_rows.len(), R * k);
    assert_eq!(panel.len(), k * C);
    let rows: [&[f32]; R] = std::array::from_fn(|r| &a_rows[r * k..(r + 1) * k]);
    let mut acc = [[0.0f32; C]; R];
    for (row, &b0) in acc.iter_mut().zip(bias) {
        *row = [b0; C];
    }
    for (kk, bv) in panel.chunks_exact(C).enumerate() {
        let bv: &[f32; C] = bv.try_into().expect("panel row");
        for r in 0..R {
            let x = rows[r][kk];
            for j in 0..C {
                acc[r][j] += x * bv[j];
            }
        }
    }
    for (r, &row) in acc.iter().enumerate() {
        let at = (i0 + r) * n + j0;
        if w == C {
            c[at..at + C].copy_from_slice(&row);
        } else {
            c[at..at + w].copy_from_slice(&row[..w]);
        }
    }
}

/// Per-timestep linear map across channels.
pub fn pointwise_conv1d(input: &Frame, pw: &Pointwise) -> Result<Frame> {
    if input.channels() != pw.in_channels {
        return Err(Error::Config(format!(
            "pointwise conv expects {} input channels, got {}",
            pw.in_channels,
            input.channels()
        )));
    }
    let mut out = Frame::zeros(pw.out_channels, input.len());
    gemm_bias(
        &pw.weight,
        pw.out_channels,
        pw.in_channels,
        input.data(),
        input.len(),
        &pw.bias,
        out.data_mut(),
    );
    Ok(out)
}

/// `gamma * (x - mean) / sqrt(var + eps) + beta`, per channel.
pub fn batchnorm_affine(input: &Frame, bn: &BatchNorm) -> Result<Frame> {
    let mut out = input.clone();
    batchnorm_inplace(&mut out, bn)?;
    Ok(out)
}

pub(crate) fn batchnorm_inplace(x: &mut Frame, bn: &BatchNorm) -> Result<()> {
    let c = x.channels();
    if [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var]
        .iter()
        .any(|p| p.len() != c)
    {
        return Err(Error::Shape(format!(
            "batch-norm parameters do not match {c} channels"
        )));
    }
    if let Some(v) = bn.running_var.iter().find(|v| v.is_nan() || **v < 0.0) {
        return Err(Error::Data(format!("negative running variance {v}")));
    }
    for ch in 0..c {
        let gamma = bn.gamma[ch];
        let beta = bn.beta[ch];
        let mean = bn.running_mean[ch];
        let denom = (bn.running_var[ch] + bn.eps).sqrt();
        for v in x.row_mut(ch) {
            *v = gamma * (*v - mean) / denom + beta;
        }
    }
    Ok(())
}

/// Parametric ReLU with one slope per channel.
pub fn prelu(input: &Frame, alpha: &[f32]) -> Result<Frame> {
    let mut out = input.clone();
    prelu_inplace(&mut out, alpha)?;
    Ok(out)
}

pub(crate) fn prelu_inplace(x: &mut Frame, alpha: &[f32]) -> Result<()> {
    if alpha.len() != x.channels() {
        return Err(Error::Shape(format!(
            "prelu has {} slopes for {} channels",
            alpha.len(),
            x.channels()
        )));
    }
    for (c, &a) in alpha.iter().enumerate() {
        for v in x.row_mut(c) {
            if *v < 0.0 {
                *v *= a;
            }
        }
    }
    Ok(())
}

/// Keeps even time indices, halving the length.
pub fn decimate2(input: &Frame) -> Result<Frame> {
    if !input.len().is_multiple_of(2) {
        return Err(Error::Contract(format!(
            "decimation needs an even length, got {}",
            input.len()
        )));
    }
    let half = input.len() / 2;
    let mut data = Vec::with_capacity(input.channels() * half);
    for c in 0..input.channels() {
        data.extend(input.row(c).iter().step_by(2));
    }
    Frame::new(input.channels(), half, data)
}

/// Causal 2x linear interpolation.
///
/// `out[2i] = (prev[i] + in[i]) / 2` and `out[2i + 1] = in[i]`, where `prev[0]`
/// comes from the one-sample cache. The cache then holds the last input sample.
pub fn upsample2_causal(input: &Frame, cache: &mut LayerCache) -> Result<Frame> {
    if cache.channels != input.channels() || cache.history_len != 1 {
        return Err(Error::Shape(format!(
            "upsampler cache {}x{} does not fit {} channels",
            cache.channels,
            cache.history_len,
            input.channels()
        )));
    }
    let len = input.len();
    if len == 0 {
        return Ok(Frame::zeros(input.channels(), 0));
    }
    let mut out = Frame::zeros(input.channels(), 2 * len);
    for c in 0..input.channels() {
        let src = input.row(c);
        let dst = out.row_mut(c);
        let mut prev = cache.data[c];
        for (i, &cur) in src.iter().enumerate() {
            dst[2 * i] = 0.5 * (prev + cur);
            dst[2 * i + 1] = cur;
            prev = cur;
        }
        cache.data[c] = prev;
    }
    Ok(out)
}

/// Stacks `b`'s channels below `a`'s.
pub fn concat_channels(a: &Frame, b: &Frame) -> Result<Frame> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "cannot concatenate lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Frame::new(a.channels() + b.channels(), a.len(), data)
}

//! WAV I/O and synthetic noisy scenes.
//!
//! Scenes follow the additive reverberant model: each microphone hears the dry
//! source convolved with its own room impulse response, plus noise scaled to a
//! requested SNR.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Frame;

/// Multi-channel audio with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub sample_rate: u32,
    pub frame: Frame,
}

impl AudioClip {
    pub fn new(sample_rate: u32, frame: Frame) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Data("sample rate must be positive".into()));
        }
        if !frame.is_finite() {
            return Err(Error::Data("audio contains non-finite samples".into()));
        }
        Ok(Self { sample_rate, frame })
    }

    pub fn channels(&self) -> usize {
        self.frame.channels()
    }

    pub fn len(&self) -> usize {
        self.frame.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn peak(&self) -> f32 {
        self.frame.data().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

/// Decodes a RIFF/WAVE byte image. PCM-16 sample `s` maps to `s / 32768`.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::WavHeader("missing RIFF/WAVE signature".into()));
    }
    let mut fmt: Option<(u16, u16, u32, u16, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = le_u32(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let available = bytes.len() - body_start;
        match id {
            b"fmt " => {
                if size < 16 || available < 16 {
                    return Err(Error::WavHeader(format!("fmt chunk of {size} bytes")));
                }
                let b = &bytes[body_start..];
                let mut tag = le_u16(b, 0);
                if tag == FORMAT_EXTENSIBLE {
                    if size < 40 || available < 40 {
                        return Err(Error::WavHeader("short extensible fmt chunk".into()));
                    }
                    // sub-format GUID starts with the plain format tag
                    tag = le_u16(b, 24);
                }
                fmt = Some((
                    tag,
                    le_u16(b, 2),
                    le_u32(b, 4),
                    le_u16(b, 12),
                    le_u16(b, 14),
                ));
            }
            b"data" => {
                if size > available {
                    return Err(Error::WavTruncated {
                        expected: size,
                        found: available,
                    });
                }
                data = Some(&bytes[body_start..body_start + size]);
            }
            _ => {}
        }
        pos = body_start + size + (size & 1);
    }

    let (tag, channels, sample_rate, block_align, bits) =
        fmt.ok_or_else(|| Error::WavHeader("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::WavHeader("no data chunk".into()))?;
    if channels == 0 || sample_rate == 0 {
        return Err(Error::WavHeader(format!(
            "channels={channels} sample_rate={sample_rate}"
        )));
    }
    let encoding = match (tag, bits) {
        (FORMAT_PCM, 16) => WavEncoding::Pcm16,
        (FORMAT_FLOAT, 32) => WavEncoding::Float32,
        _ => {
            return Err(Error::WavEncoding(format!(
                "format tag {tag} with {bits} bits per sample"
            )))
        }
    };
    let width = usize::from(bits / 8);
    let channels = usize::from(channels);
    if usize::from(block_align) != width * channels {
        return Err(Error::WavHeader(format!(
            "block align {block_align} does not match {channels} x {width} bytes"
        )));
    }
    let frame_bytes = width * channels;
    if data.len() % frame_bytes != 0 {
        let whole = data.len() / frame_bytes + 1;
        return Err(Error::WavTruncated {
            expected: whole * frame_bytes,
            found: data.len(),
        });
    }
    let len = data.len() / frame_bytes;
    let mut frame = Frame::zeros(channels, len);
    for (t, block) in data.chunks_exact(frame_bytes).enumerate() {
        for (c, s) in block.chunks_exact(width).enumerate() {
            let v = match encoding {
                WavEncoding::Pcm16 => f32::from(i16::from_le_bytes([s[0], s[1]])) / 32768.0,
                WavEncoding::Float32 => f32::from_le_bytes(s.try_into().expect("4 bytes")),
            };
            frame.set(c, t, v);
        }
    }
    AudioClip::new(sample_rate, frame)
}

/// Encodes a clip as a canonical 44-byte-header WAV.
pub fn encode_wav(clip: &AudioClip, encoding: WavEncoding) -> Result<Vec<u8>> {
    let channels = clip.channels();
    let (tag, width) = match encoding {
        WavEncoding::Pcm16 => (FORMAT_PCM, 2usize),
        WavEncoding::Float32 => (FORMAT_FLOAT, 4usize),
    };
    let channels_u16 = u16::try_from(channels)
        .ok()
        .filter(|&c| c > 0)
        .ok_or_else(|| Error::WavHeader(format!("cannot encode {channels} channels")))?;
    let data_len = clip.len() * channels * width;
    let riff_len = u32::try_from(36 + data_len)
        .map_err(|_| Error::WavHeader("audio too long for RIFF".into()))?;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&riff_len.to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&channels_u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    let block_align = channels * width;
    out.extend_from_slice(&((clip.sample_rate as usize * block_align) as u32).to_le_bytes());
    out.extend_from_slice(&(block_align as u16).to_le_bytes());
    out.extend_from_slice(&((width * 8) as u16).to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for t in 0..clip.len() {
        for c in 0..channels {
            let v = clip.frame.get(c, t);
            match encoding {
                WavEncoding::Pcm16 => {
                    let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    out.extend_from_slice(&q.to_le_bytes());
                }
                WavEncoding::Float32 => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    Ok(out)
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes)
}

pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip, encoding: WavEncoding) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_wav(clip, encoding)?).map_err(|e| Error::io(path, e))
}

/// Per-channel room impulse responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub taps: Vec<Vec<f32>>,
}

impl Rir {
    pub fn new(taps: Vec<Vec<f32>>) -> Result<Self> {
        if taps.is_empty() || taps.iter().any(Vec::is_empty) {
            return Err(Error::Data(
                "impulse response needs at least one tap per channel".into(),
            ));
        }
        Ok(Self { taps })
    }

    pub fn channels(&self) -> usize {
        self.taps.len()
    }
}

/// Causal convolution of each channel with its impulse response, truncated to
/// the dry length. A mono `dry` is broadcast to every RIR channel.
pub fn convolve_rir(dry: &AudioClip, rir: &Rir) -> Result<AudioClip> {
    if rir.taps.is_empty() || rir.taps.iter().any(Vec::is_empty) {
        return Err(Error::Data("empty impulse response".into()));
    }
    let channels = rir.channels();
    if dry.channels() != 1 && dry.channels() != channels {
        return Err(Error::Shape(format!(
            "{}-channel signal cannot be convolved with a {channels}-channel RIR",
            dry.channels()
        )));
    }
    let len = dry.len();
    let mut out = Frame::zeros(channels, len);
    for (c, taps) in rir.taps.iter().enumerate() {
        let x = dry.frame.row(if dry.channels() == 1 { 0 } else { c });
        let y = out.row_mut(c);
        for (k, &h) in taps.iter().enumerate() {
            if h == 0.0 || k >= len {
                continue;
            }
            for (o, &s) in y[k..].iter_mut().zip(x) {
                *o += h * s;
            }
        }
    }
    AudioClip::new(dry.sample_rate, out)
}

fn power(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples
        .iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        / samples.len() as f64
}

/// Adds `noise`, rescaled so that `10·log10(P_signal / P_noise) == snr_db` over
/// the signal span. Noise longer than the signal is cropped to its start.
pub fn mix_at_snr(reverberant: &AudioClip, noise: &AudioClip, snr_db: f64) -> Result<AudioClip> {
    if reverberant.sample_rate != noise.sample_rate {
        return Err(Error::Shape(format!(
            "sample rates differ: {} vs {}",
            reverberant.sample_rate, noise.sample_rate
        )));
    }
    if noise.channels() != reverberant.channels() {
        return Err(Error::Shape(format!(
            "noise has {} channels, signal {}",
            noise.channels(),
            reverberant.channels()
        )));
    }
    let len = reverberant.len();
    if noise.len() < len {
        return Err(Error::Shape(format!(
            "noise of {} samples is shorter than the {len}-sample signal",
            noise.len()
        )));
    }
    let noise = noise.frame.slice_time(0, len);
    let p_signal = power(reverberant.frame.data());
    let p_noise = power(noise.data());
    if p_signal == 0.0 || p_noise == 0.0 {
        return Err(Error::Data(
            "SNR is undefined for a silent signal or noise".into(),
        ));
    }
    let gain = (p_signal / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt() as f32;
    let data = reverberant
        .frame
        .data()
        .iter()
        .zip(noise.data())
        .map(|(&s, &n)| s + gain * n)
        .collect();
    AudioClip::new(
        reverberant.sample_rate,
        Frame::new(reverberant.channels(), len, data)?,
    )
}

/// Peak level synthetic mixtures are normalized to.
pub const SCENE_PEAK: f32 = 0.9;

/// Shortest scene: one chunk of the default model.
pub const MIN_SCENE_LEN: usize = 512;

/// A synthetic mixture with its enhancement target.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub mixture: AudioClip,
    /// Reverberant clean signal at the reference microphone (channel 0).
    pub reference: AudioClip,
    /// Gain applied to both clips so the mixture peaks at [`SCENE_PEAK`].
    pub normalization_gain: f32,
}

/// Harmonic source with a wandering pitch and a syllable-rate envelope.
fn speech_like(rng: &mut ChaCha8Rng, len: usize, sample_rate: u32) -> Vec<f32> {
    let sr = f64::from(sample_rate);
    let base_f0 = rng.gen_range(100.0..200.0);
    let vibrato_rate = rng.gen_range(0.5..2.0);
    let syllable_rate = rng.gen_range(3.0..5.0);
    let env_phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let harmonics: Vec<f64> = (1..=12)
        .map(|h| rng.gen_range(0.3..1.0) / h as f64)
        .collect();
    let mut phase = 0.0f64;
    (0..len)
        .map(|t| {
            let time = t as f64 / sr;
            let f0 = base_f0 * (1.0 + 0.15 * (std::f64::consts::TAU * vibrato_rate * time).sin());
            phase += std::f64::consts::TAU * f0 / sr;
            let env = (std::f64::consts::PI * syllable_rate * time + env_phase)
                .sin()
                .abs()
                .powf(1.5);
            let voiced: f64 = harmonics
                .iter()
                .enumerate()
                .filter(|(h, _)| (*h as f64 + 1.0) * f0 < sr / 2.0)
                .map(|(h, a)| a * ((h as f64 + 1.0) * phase).sin())
                .sum();
            (0.3 * env * voiced) as f32
        })
        .collect()
}

/// Sparse exponentially decaying impulse response with a per-channel direct
/// path delay.
fn sparse_rir(rng: &mut ChaCha8Rng, channel: usize, sample_rate: u32) -> Vec<f32> {
    let len = (sample_rate as usize / 20).max(8);
    let mut taps = vec![0.0f32; len];
    let direct = channel.min(len - 1);
    taps[direct] = 1.0;
    let decay = len as f64 / 4.0;
    for _ in 0..24 {
        let pos = rng.gen_range(direct + 1..len.max(direct + 2)).min(len - 1);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        taps[pos] += (sign * 0.5 * (-(pos as f64) / decay).exp()) as f32;
    }
    taps
}

/// Deterministic multi-microphone scene mixed at `snr_db`.
pub fn synth_scene(
    seed: u64,
    duration_secs: f64,
    channels: usize,
    snr_db: f64,
    sample_rate: u32,
) -> Result<Scene> {
    let len = (duration_secs * f64::from(sample_rate)).round();
    if !len.is_finite() || len < MIN_SCENE_LEN as f64 || channels == 0 || sample_rate == 0 {
        return Err(Error::Config(format!(
            "scene of {duration_secs} s x {channels} channels at {sample_rate} Hz is degenerate \
             (need at least {MIN_SCENE_LEN} samples)"
        )));
    }
    let len = len as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = f64::from(sample_rate);

    let dry = AudioClip::new(
        sample_rate,
        Frame::mono(speech_like(&mut rng, len, sample_rate)),
    )?;
    let rir = Rir::new(
        (0..channels)
            .map(|c| sparse_rir(&mut rng, c, sample_rate))
            .collect(),
    )?;
    let reverberant = convolve_rir(&dry, &rir)?;

    let spare = sample_rate as usize / 2;
    let noise_len = len + spare;
    let hum = rng.gen_range(45.0..65.0);
    let tone = rng.gen_range(300.0..3000.0);
    let mut noise = Frame::zeros(channels, noise_len);
    for c in 0..channels {
        let hum_phase = rng.gen_range(0.0..std::f64::consts::TAU);
        for (t, v) in noise.row_mut(c).iter_mut().enumerate() {
            let time = t as f64 / sr;
            let tonal = 0.3 * (std::f64::consts::TAU * hum * time + hum_phase).sin()
                + 0.15 * (std::f64::consts::TAU * 2.0 * hum * time).sin()
                + 0.1 * (std::f64::consts::TAU * tone * time).sin();
            *v = (rng.gen_range(-1.0..1.0) + tonal) as f32;
        }
    }
    let offset = rng.gen_range(0..=spare);
    let noise = AudioClip::new(sample_rate, noise.slice_time(offset, offset + len))?;
    let mixture = mix_at_snr(&reverberant, &noise, snr_db)?;

    let gain = SCENE_PEAK / mixture.peak();
    let scale = |clip: &AudioClip| -> Result<AudioClip> {
        let data = clip.frame.data().iter().map(|v| v * gain).collect();
        AudioClip::new(sample_rate, Frame::new(clip.channels(), clip.len(), data)?)
    };
    Ok(Scene {
        mixture: scale(&mixture)?,
        reference: scale(&AudioClip::new(sample_rate, reverberant.frame.channel(0))?)?,
        normalization_gain: gain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(channels: usize, len: usize, seed: u64) -> AudioClip {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..channels * len)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        AudioClip::new(16_000, Frame::new(channels, len, data).unwrap()).unwrap()
    }

    #[test]
    fn float_round_trip_is_exact() {
        let c = clip(3, 100, 1);
        let back = decode_wav(&encode_wav(&c, WavEncoding::Float32).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn pcm16_scale_and_requantization() {
        let frame = Frame::mono(vec![-1.0, 0.5, 32767.0 / 32768.0, -3.0 / 32768.0]);
        let c = AudioClip::new(8000, frame).unwrap();
        let bytes = encode_wav(&c, WavEncoding::Pcm16).unwrap();
        assert_eq!(&bytes[44..46], &(-32768i16).to_le_bytes());
        let back = decode_wav(&bytes).unwrap();
        assert_eq!(back.frame.get(0, 0), -1.0);
        assert_eq!(back, c);
        assert_eq!(encode_wav(&back, WavEncoding::Pcm16).unwrap(), bytes);

        // out-of-range samples clip
        let loud = AudioClip::new(8000, Frame::mono(vec![2.0, -2.0])).unwrap();
        let back = decode_wav(&encode_wav(&loud, WavEncoding::Pcm16).unwrap()).unwrap();
        assert_eq!(back.frame.data(), &[32767.0 / 32768.0, -1.0]);
    }

    #[test]
    fn header_fields() {
        let c = clip(8, 10, 2);
        let back = decode_wav(&encode_wav(&c, WavEncoding::Pcm16).unwrap()).unwrap();
        assert_eq!(back.channels(), 8);
        assert_eq!(back.sample_rate, 16_000);
        assert_eq!(back.len(), 10);
    }

    #[test]
    fn distinct_errors() {
        let bytes = encode_wav(&clip(2, 16, 3), WavEncoding::Float32).unwrap();

        let mut bad = bytes.clone();
        bad[0..4].copy_from_slice(b"RIFX");
        assert!(matches!(decode_wav(&bad), Err(Error::WavHeader(_))));

        let mut bad = bytes.clone();
        bad[34..36].copy_from_slice(&24u16.to_le_bytes());
        assert!(matches!(decode_wav(&bad), Err(Error::WavEncoding(_))));

        let mut bad = bytes.clone();
        bad[20..22].copy_from_slice(&2u16.to_le_bytes()); // A-law
        assert!(matches!(decode_wav(&bad), Err(Error::WavEncoding(_))));

        assert!(matches!(
            decode_wav(&bytes[..bytes.len() - 10]),
            Err(Error::WavTruncated { .. })
        ));
        assert!(matches!(decode_wav(&bytes[..36]), Err(Error::WavHeader(_))));
    }

    #[test]
    fn skips_unknown_chunks() {
        let c = clip(1, 4, 4);
        let plain = encode_wav(&c, WavEncoding::Float32).unwrap();
        let mut with_list = plain[..36].to_vec();
        with_list.extend_from_slice(b"LIST");
        with_list.extend_from_slice(&3u32.to_le_bytes());
        with_list.extend_from_slice(&[1, 2, 3, 0]); // odd size plus pad byte
        with_list.extend_from_slice(&plain[36..]);
        assert_eq!(decode_wav(&with_list).unwrap(), c);
    }

    #[test]
    fn rir_identity_and_delay() {
        let c = clip(2, 32, 5);
        let id = Rir::new(vec![vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(convolve_rir(&c, &id).unwrap(), c);

        let delay = Rir::new(vec![vec![0.0, 1.0]; 2]).unwrap();
        let out = convolve_rir(&c, &delay).unwrap();
        assert_eq!(out.frame.get(0, 0), 0.0);
        assert_eq!(&out.frame.row(1)[1..], &c.frame.row(1)[..31]);

        assert!(Rir::new(vec![vec![]]).is_err());
        assert!(Rir::new(vec![]).is_err());
        assert!(convolve_rir(&c, &Rir { taps: vec![] }).is_err());
        assert!(convolve_rir(&clip(3, 8, 1), &id).is_err());
    }

    #[test]
    fn rir_matches_naive_double_loop() {
        let dry = clip(1, 64, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let taps: Vec<f32> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let out = convolve_rir(&dry, &Rir::new(vec![taps.clone()]).unwrap()).unwrap();
        for t in 0..64 {
            let mut acc = 0.0f64;
            for (k, &h) in taps.iter().enumerate() {
                if k <= t {
                    acc += f64::from(h) * f64::from(dry.frame.get(0, t - k));
                }
            }
            assert!((f64::from(out.frame.get(0, t)) - acc).abs() < 1e-5);
        }
    }

    #[test]
    fn mix_hits_requested_snr() {
        let s = clip(2, 4000, 8);
        let n = clip(2, 5000, 9);
        let mixed = mix_at_snr(&s, &n, 0.0).unwrap();
        let scaled: Vec<f32> = mixed
            .frame
            .data()
            .iter()
            .zip(s.frame.data())
            .map(|(m, s)| m - s)
            .collect();
        let ps = power(s.frame.data());
        let pn = power(&scaled);
        assert!(((ps - pn) / ps).abs() < 1e-5);

        let clean = mix_at_snr(&s, &n, 1000.0).unwrap();
        for (a, b) in clean.frame.data().iter().zip(s.frame.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn mix_errors() {
        let s = clip(1, 100, 1);
        let silent = AudioClip::new(16_000, Frame::zeros(1, 100)).unwrap();
        assert!(matches!(mix_at_snr(&silent, &s, 0.0), Err(Error::Data(_))));
        assert!(matches!(mix_at_snr(&s, &silent, 0.0), Err(Error::Data(_))));
        assert!(mix_at_snr(&s, &clip(1, 50, 2), 0.0).is_err());
        assert!(mix_at_snr(&s, &clip(2, 100, 2), 0.0).is_err());
    }

    #[test]
    fn scenes_are_deterministic_and_bounded() {
        let a = synth_scene(7, 0.25, 8, 5.0, 16_000).unwrap();
        let b = synth_scene(7, 0.25, 8, 5.0, 16_000).unwrap();
        let c = synth_scene(8, 0.25, 8, 5.0, 16_000).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.mixture, c.mixture);
        assert_eq!(a.mixture.channels(), 8);
        assert_eq!(a.reference.channels(), 1);
        assert_eq!(a.mixture.len(), 4000);
        assert!((a.mixture.peak() - SCENE_PEAK).abs() < 1e-6);
        assert!(a.reference.peak() <= 1.0);
        assert!(a.mixture.frame.is_finite());
        assert!(synth_scene(1, 0.01, 8, 0.0, 16_000).is_err());
        assert!(synth_scene(1, 1.0, 0, 0.0, 16_000).is_err());
    }
}

//! Commands behind the `tcwu` binary.
//!
//! Each command returns its stdout text and an [`ExitStatus`]; failures carry
//! their own status. Commands that write files also write a JSON run manifest
//! next to them.
//!
//! | status | meaning |
//! |---|---|
//! | 0 | success |
//! | 1 | verification failed |
//! | 2 | invalid arguments or geometry |
//! | 3 | input channel count does not match the model |
//! | 4 | weight file unreadable or invalid |
//! | 5 | input audio unreadable or invalid |
//! | 6 | output could not be written |

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::audio::{read_wav, synth_scene, write_wav, AudioClip, WavEncoding};
use crate::bench::{run_bench, BenchConfig};
use crate::container;
use crate::error::Error;
use crate::metrics::{rtf, MetricReport};
use crate::model::{ModelConfig, ModelWeights};
use crate::stream::{verify_streaming_equivalence, Stream, StreamConfig};
use crate::tensor::Frame;

/// Pass threshold of `verify`.
pub const VERIFY_TOLERANCE: f32 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    VerifyFailed = 1,
    Usage = 2,
    ChannelMismatch = 3,
    BadWeights = 4,
    InputRead = 5,
    OutputWrite = 6,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug)]
pub struct CliError {
    pub status: ExitStatus,
    pub message: String,
}

impl CliError {
    fn new(status: ExitStatus, message: impl fmt::Display) -> Self {
        Self {
            status,
            message: message.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

fn usage(e: Error) -> CliError {
    CliError::new(ExitStatus::Usage, e)
}

fn output_err(e: Error) -> CliError {
    CliError::new(ExitStatus::OutputWrite, e)
}

#[derive(Debug)]
pub struct CommandOutput {
    pub text: String,
    pub status: ExitStatus,
}

impl CommandOutput {
    fn ok(text: String) -> Self {
        Self {
            text,
            status: ExitStatus::Success,
        }
    }
}

/// Where model weights come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WeightsSource {
    File(PathBuf),
    /// Seeded random weights for the default configuration.
    Seed(u64),
}

impl WeightsSource {
    pub fn load(&self) -> Result<ModelWeights, CliError> {
        match self {
            WeightsSource::File(path) => {
                container::read_weights(path).map_err(|e| CliError::new(ExitStatus::BadWeights, e))
            }
            WeightsSource::Seed(seed) => ModelWeights::init_random(&ModelConfig::default(), *seed)
                .map_err(|e| CliError::new(ExitStatus::BadWeights, e)),
        }
    }

    fn describe(&self) -> String {
        match self {
            WeightsSource::File(p) => p.display().to_string(),
            WeightsSource::Seed(s) => format!("seed:{s}"),
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            WeightsSource::Seed(s) => Some(*s),
            WeightsSource::File(_) => None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timing {
    pub compute_secs: f64,
    pub io_secs: f64,
    pub audio_secs: f64,
    /// Compute time over audio duration.
    pub rtf: f64,
}

/// Record of one command invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub weights: Option<String>,
    pub seed: Option<u64>,
    pub model_config: Option<ModelConfig>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub chunk_len: Option<usize>,
    pub push_len: Option<usize>,
    pub parameters: serde_json::Map<String, serde_json::Value>,
    pub timing: Option<Timing>,
    pub metrics: Vec<MetricReport>,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            weights: None,
            seed: None,
            model_config: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            chunk_len: None,
            push_len: None,
            parameters: serde_json::Map::new(),
            timing: None,
            metrics: Vec::new(),
        }
    }

    fn param(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.parameters.insert(key.to_string(), value.into());
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::new(ExitStatus::OutputWrite, e))?;
        std::fs::write(path, json + "\n")
            .map_err(|e| CliError::new(ExitStatus::OutputWrite, format!("{}: {e}", path.display())))
    }
}

fn sibling_manifest(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnhanceMode {
    Offline,
    Stream,
}

#[derive(Debug, Clone)]
pub struct EnhanceArgs {
    pub input: PathBuf,
    pub weights: WeightsSource,
    pub output: PathBuf,
    pub mode: EnhanceMode,
    pub chunk_len: usize,
    /// Samples handed to the stream per push; 640 is 40 ms at 16 kHz.
    pub push_len: usize,
    pub encoding: WavEncoding,
}

/// Runs the whole clip offline, zero-padded to a multiple of the minimum
/// chunk and truncated back.
pub fn enhance_offline(model: &ModelWeights, input: &Frame) -> crate::Result<Frame> {
    let min = model.config.min_chunk_len();
    let real = input.len();
    let padded_len = real.div_ceil(min).max(1) * min;
    let mut padded = input.clone();
    padded.append_time(&Frame::zeros(input.channels(), padded_len - real))?;
    Ok(model.forward_offline(&padded)?.slice_time(0, real))
}

/// Streams `input` in `push_len` pieces and flushes.
pub fn enhance_stream(
    model: &ModelWeights,
    input: &Frame,
    config: StreamConfig,
    push_len: usize,
) -> crate::Result<Frame> {
    if push_len == 0 {
        return Err(Error::Config("push length must be positive".into()));
    }
    let mut stream = Stream::new(model, config)?;
    let mut out = Frame::zeros(1, 0);
    for start in (0..input.len()).step_by(push_len) {
        let end = (start + push_len).min(input.len());
        out.append_time(&stream.push(&input.slice_time(start, end))?)?;
    }
    out.append_time(&stream.flush()?)?;
    Ok(out)
}

pub fn enhance(args: &EnhanceArgs) -> Result<CommandOutput, CliError> {
    let io_start = Instant::now();
    let model = args.weights.load()?;
    let clip = read_wav(&args.input).map_err(|e| CliError::new(ExitStatus::InputRead, e))?;
    let mut io_secs = io_start.elapsed().as_secs_f64();
    if clip.channels() != model.config.input_channels {
        return Err(CliError::new(
            ExitStatus::ChannelMismatch,
            format!(
                "{} has {} channels, model expects {}",
                args.input.display(),
                clip.channels(),
                model.config.input_channels
            ),
        ));
    }
    let stream_cfg = StreamConfig {
        chunk_len: args.chunk_len,
        sample_rate: clip.sample_rate,
    };
    stream_cfg.validate(&model).map_err(usage)?;

    let compute_start = Instant::now();
    let enhanced = match args.mode {
        EnhanceMode::Offline => enhance_offline(&model, &clip.frame),
        EnhanceMode::Stream => enhance_stream(&model, &clip.frame, stream_cfg, args.push_len),
    }
    .map_err(usage)?;
    let compute_secs = compute_start.elapsed().as_secs_f64();

    let write_start = Instant::now();
    let out_clip = AudioClip::new(clip.sample_rate, enhanced).map_err(output_err)?;
    write_wav(&args.output, &out_clip, args.encoding).map_err(output_err)?;
    io_secs += write_start.elapsed().as_secs_f64();

    let audio_secs = clip.duration_secs();
    let mut manifest = RunManifest::new("enhance");
    manifest.weights = Some(args.weights.describe());
    manifest.seed = args.weights.seed();
    manifest.model_config = Some(model.config.clone());
    manifest.inputs.push(args.input.display().to_string());
    manifest.outputs.push(args.output.display().to_string());
    manifest.chunk_len = Some(args.chunk_len);
    if args.mode == EnhanceMode::Stream {
        manifest.push_len = Some(args.push_len);
    }
    manifest.param(
        "mode",
        match args.mode {
            EnhanceMode::Offline => "offline",
            EnhanceMode::Stream => "stream",
        },
    );
    manifest.timing = Some(Timing {
        compute_secs,
        io_secs,
        audio_secs,
        rtf: if audio_secs > 0.0 {
            rtf(compute_secs, audio_secs).unwrap_or(f64::NAN)
        } else {
            0.0
        },
    });
    manifest.write(&sibling_manifest(&args.output))?;

    Ok(CommandOutput::ok(format!(
        "wrote {} ({} samples, {} Hz)\ncompute_secs={compute_secs:.4}\nrtf={:.4}\n",
        args.output.display(),
        out_clip.len(),
        out_clip.sample_rate,
        manifest.timing.as_ref().map_or(0.0, |t| t.rtf),
    )))
}

#[derive(Debug, Clone)]
pub struct VerifyArgs {
    pub weights: WeightsSource,
    pub len: usize,
    pub chunk_len: usize,
    /// Seed of the random input signal.
    pub input_seed: u64,
    pub manifest: Option<PathBuf>,
}

/// Seeded uniform noise in `[-1, 1)`.
pub fn random_input(channels: usize, len: usize, seed: u64) -> Frame {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let data = (0..channels * len)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    Frame::new(channels, len, data).expect("sized buffer")
}

pub fn verify(args: &VerifyArgs) -> Result<CommandOutput, CliError> {
    let model = args.weights.load()?;
    let min = model.config.min_chunk_len();
    if args.len == 0 || !args.len.is_multiple_of(min) {
        return Err(CliError::new(
            ExitStatus::Usage,
            format!("length {} is not a positive multiple of {min}", args.len),
        ));
    }
    let input = random_input(model.config.input_channels, args.len, args.input_seed);
    let diff = verify_streaming_equivalence(&model, &input, args.chunk_len).map_err(usage)?;
    let pass = diff <= VERIFY_TOLERANCE;

    if let Some(path) = &args.manifest {
        let mut m = RunManifest::new("verify");
        m.weights = Some(args.weights.describe());
        m.seed = args.weights.seed();
        m.model_config = Some(model.config.clone());
        m.chunk_len = Some(args.chunk_len);
        m.param("len", args.len);
        m.param("input_seed", args.input_seed);
        m.param("max_abs_diff", f64::from(diff));
        m.param("pass", pass);
        m.outputs.push(path.display().to_string());
        m.write(path)?;
    }
    Ok(CommandOutput {
        text: format!(
            "max_abs_diff={diff:e}\ntolerance={VERIFY_TOLERANCE:e}\nverdict={}\n",
            if pass { "pass" } else { "fail" }
        ),
        status: if pass {
            ExitStatus::Success
        } else {
            ExitStatus::VerifyFailed
        },
    })
}

#[derive(Debug, Clone)]
pub struct BenchArgs {
    pub weights: WeightsSource,
    pub config: BenchConfig,
    pub manifest: Option<PathBuf>,
}

pub fn bench(args: &BenchArgs) -> Result<CommandOutput, CliError> {
    let model = args.weights.load()?;
    let report = run_bench(&model, &args.config).map_err(usage)?;
    if let Some(path) = &args.manifest {
        let mut m = RunManifest::new("bench");
        m.weights = Some(args.weights.describe());
        m.seed = args.weights.seed();
        m.model_config = Some(model.config.clone());
        m.chunk_len = Some(args.config.chunk_len);
        m.param("duration_secs", args.config.duration_secs);
        m.param("repeat", args.config.repeat);
        m.param(
            "report",
            serde_json::to_value(&report).map_err(|e| CliError::new(ExitStatus::OutputWrite, e))?,
        );
        m.outputs.push(path.display().to_string());
        m.write(path)?;
    }
    Ok(CommandOutput::ok(report.to_text()))
}

#[derive(Debug, Clone)]
pub struct SynthArgs {
    pub seed: u64,
    pub duration_secs: f64,
    pub snr_db: f64,
    pub channels: usize,
    pub sample_rate: u32,
    pub out_dir: PathBuf,
}

pub fn synth(args: &SynthArgs) -> Result<CommandOutput, CliError> {
    let scene = synth_scene(
        args.seed,
        args.duration_secs,
        args.channels,
        args.snr_db,
        args.sample_rate,
    )
    .map_err(usage)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| {
        CliError::new(
            ExitStatus::OutputWrite,
            format!("{}: {e}", args.out_dir.display()),
        )
    })?;
    let mixture = args.out_dir.join("mixture.wav");
    let reference = args.out_dir.join("reference.wav");
    write_wav(&mixture, &scene.mixture, WavEncoding::Float32).map_err(output_err)?;
    write_wav(&reference, &scene.reference, WavEncoding::Float32).map_err(output_err)?;

    let mut m = RunManifest::new("synth");
    m.seed = Some(args.seed);
    m.outputs = vec![
        mixture.display().to_string(),
        reference.display().to_string(),
    ];
    m.param("duration_secs", args.duration_secs);
    m.param("snr_db", args.snr_db);
    m.param("channels", args.channels);
    m.param("sample_rate", args.sample_rate);
    m.param("normalization_gain", f64::from(scene.normalization_gain));
    m.write(&args.out_dir.join("manifest.json"))?;

    Ok(CommandOutput::ok(format!(
        "wrote {} and {}\nsamples={}\nnormalization_gain={}\n",
        mixture.display(),
        reference.display(),
        scene.mixture.len(),
        scene.normalization_gain
    )))
}

pub fn init_weights(seed: u64, out: &Path) -> Result<CommandOutput, CliError> {
    let model = WeightsSource::Seed(seed).load()?;
    container::write_weights(out, &model).map_err(output_err)?;
    let mut m = RunManifest::new("init-weights");
    m.seed = Some(seed);
    m.model_config = Some(model.config.clone());
    m.outputs.push(out.display().to_string());
    m.param("parameters", model.parameter_count());
    m.write(&sibling_manifest(out))?;
    Ok(CommandOutput::ok(format!(
        "wrote {} ({} parameters)\n",
        out.display(),
        model.parameter_count()
    )))
}

/// Tensor listing: one `name shape offset checksum` line per tensor.
pub fn inspect(path: &Path) -> Result<CommandOutput, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::new(ExitStatus::BadWeights, format!("{}: {e}", path.display())))?;
    let (manifest, tensors) =
        container::inspect(&bytes).map_err(|e| CliError::new(ExitStatus::BadWeights, e))?;
    let config = serde_json::to_string(&manifest.config)
        .map_err(|e| CliError::new(ExitStatus::BadWeights, e))?;
    let mut text = format!("version {}\nconfig {config}\n", manifest.version);
    let mut total = 0;
    for t in &tensors {
        let shape: Vec<String> = t.entry.shape.iter().map(usize::to_string).collect();
        total += t.entry.numel();
        text.push_str(&format!(
            "{} {} {} {}\n",
            t.entry.name,
            shape.join("x"),
            t.entry.offset,
            t.checksum
        ));
    }
    text.push_str(&format!("tensors {} values {total}\n", tensors.len()));
    Ok(CommandOutput::ok(text))
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tcwu::audio::WavEncoding;
use tcwu::bench::BenchConfig;
use tcwu::cli::{self, CommandOutput, EnhanceMode, WeightsSource};

/// Streaming speech enhancement with per-layer history caches.
#[derive(Parser)]
#[command(name = "tcwu", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct WeightsArg {
    /// Weight container file.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Use seeded random weights for the default configuration.
    #[arg(long)]
    seed: Option<u64>,
}

impl WeightsArg {
    fn source(&self) -> WeightsSource {
        match (&self.weights, self.seed) {
            (Some(p), _) => WeightsSource::File(p.clone()),
            (None, Some(s)) => WeightsSource::Seed(s),
            (None, None) => unreachable!("clap enforces one of --weights/--seed"),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Offline,
    Stream,
}

#[derive(Subcommand)]
enum Command {
    /// Enhance a WAV file and write mono output plus a run manifest.
    Enhance {
        input: PathBuf,
        #[command(flatten)]
        weights: WeightsArg,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "stream")]
        mode: Mode,
        /// Internal processing chunk in samples.
        #[arg(long, default_value_t = 512)]
        chunk: usize,
        /// Samples per push in stream mode.
        #[arg(long, default_value_t = 640)]
        push: usize,
        /// Write 16-bit PCM instead of 32-bit float.
        #[arg(long)]
        pcm16: bool,
    },
    /// Check that streaming output matches the offline pass.
    Verify {
        #[command(flatten)]
        weights: WeightsArg,
        #[arg(long, default_value_t = 16384)]
        len: usize,
        #[arg(long, default_value_t = 512)]
        chunk: usize,
        #[arg(long, default_value_t = 0)]
        input_seed: u64,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Measure streaming real-time factor and per-chunk latency.
    Bench {
        #[command(flatten)]
        weights: WeightsArg,
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        #[arg(long, default_value_t = 512)]
        chunk: usize,
        #[arg(long, default_value_t = 3)]
        repeat: usize,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Write a deterministic synthetic noisy/clean pair.
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 4.0)]
        duration: f64,
        #[arg(long, default_value_t = 5.0)]
        snr: f64,
        #[arg(long, default_value_t = 8)]
        channels: usize,
        #[arg(long, default_value_t = 16000)]
        sample_rate: u32,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Write seeded random weights to a container file.
    InitWeights {
        #[arg(long)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// List the tensors of a weight container.
    Inspect { path: PathBuf },
}

fn run(command: Command) -> Result<CommandOutput, cli::CliError> {
    match command {
        Command::Enhance {
            input,
            weights,
            output,
            mode,
            chunk,
            push,
            pcm16,
        } => cli::enhance(&cli::EnhanceArgs {
            input,
            weights: weights.source(),
            output,
            mode: match mode {
                Mode::Offline => EnhanceMode::Offline,
                Mode::Stream => EnhanceMode::Stream,
            },
            chunk_len: chunk,
            push_len: push,
            encoding: if pcm16 {
                WavEncoding::Pcm16
            } else {
                WavEncoding::Float32
            },
        }),
        Command::Verify {
            weights,
            len,
            chunk,
            input_seed,
            manifest,
        } => cli::verify(&cli::VerifyArgs {
            weights: weights.source(),
            len,
            chunk_len: chunk,
            input_seed,
            manifest,
        }),
        Command::Bench {
            weights,
            duration,
            chunk,
            repeat,
            manifest,
        } => cli::bench(&cli::BenchArgs {
            weights: weights.source(),
            config: BenchConfig {
                duration_secs: duration,
                chunk_len: chunk,
                repeat,
                ..BenchConfig::default()
            },
            manifest,
        }),
        Command::Synth {
            seed,
            duration,
            snr,
            channels,
            sample_rate,
            out_dir,
        } => cli::synth(&cli::SynthArgs {
            seed,
            duration_secs: duration,
            snr_db: snr,
            channels,
            sample_rate,
            out_dir,
        }),
        Command::InitWeights { seed, output } => cli::init_weights(seed, &output),
        Command::Inspect { path } => cli::inspect(&path),
    }
}

fn main() -> ExitCode {
    let args = match Cli::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(args.command) {
        Ok(out) => {
            print!("{}", out.text);
            ExitCode::from(out.status.code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.status.code() as u8)
        }
    }
}

//! Build a noisy reverberant scene, write and re-read it as WAV, and compute
//! the evaluation metrics of the unprocessed mixture.

use anyhow::Result;
use tcwu::audio::{read_wav, synth_scene, write_wav, WavEncoding};
use tcwu::metrics::{format_reports, mse, sdr_loss, si_snr, wsdr_loss};

fn main() -> Result<()> {
    let dir = std::env::temp_dir().join("tcwu-synth-example");
    std::fs::create_dir_all(&dir)?;
    for snr_db in [0.0, 5.0, 10.0] {
        let scene = synth_scene(11, 2.0, 8, snr_db, 16_000)?;
        let path = dir.join(format!("mixture_{snr_db}dB.wav"));
        write_wav(&path, &scene.mixture, WavEncoding::Pcm16)?;
        let mixture = read_wav(&path)?;

        let x = mixture.frame.row(0);
        let y = scene.reference.frame.row(0);
        println!("input SNR {snr_db} dB, peak {:.3}", mixture.peak());
        let reports = [
            si_snr(y, x)?,
            sdr_loss(y, x)?,
            wsdr_loss(x, y, x)?,
            mse(y, x)?,
        ];
        for line in format_reports(&reports).lines() {
            println!("  {line}");
        }
    }
    Ok(())
}

//! Evaluation metrics: SDR and weighted-SDR losses, SI-SNR, MSE and
//! real-time factor. All reductions accumulate in `f64`.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

/// SI-SNR values are clamped to `±SI_SNR_CAP_DB`.
pub const SI_SNR_CAP_DB: f64 = 100.0;

/// One named metric value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub name: String,
    pub value: f64,
    /// Set when an input had zero energy and `value` is a convention rather
    /// than a measurement.
    pub degenerate: bool,
    pub extras: Vec<(String, f64)>,
}

impl MetricReport {
    fn new(name: &str, value: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            degenerate: false,
            extras: Vec::new(),
        }
    }

    pub fn extra(&self, key: &str) -> Option<f64> {
        self.extras.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

/// `name=value`, then one `name.key=value` line per extra.
impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.name, self.value)?;
        if self.degenerate {
            write!(f, "\n{}.degenerate=1", self.name)?;
        }
        for (k, v) in &self.extras {
            write!(f, "\n{}.{}={}", self.name, k, v)?;
        }
        Ok(())
    }
}

/// Line-oriented text form of several reports.
pub fn format_reports(reports: &[MetricReport]) -> String {
    reports.iter().map(|r| format!("{r}\n")).collect()
}

fn check_len(a: &[f32], b: &[f32]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "metric inputs differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

fn cosine_loss(a: &[f64], b: &[f64]) -> (f64, bool) {
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    if aa == 0.0 || bb == 0.0 {
        return (0.0, true);
    }
    ((-ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0), false)
}

/// Negative cosine similarity `-<y, ŷ> / (‖y‖ ‖ŷ‖)`, in `[-1, 1]`.
///
/// A zero-norm input yields `0` with the degenerate flag set.
pub fn sdr_loss(y: &[f32], y_hat: &[f32]) -> Result<MetricReport> {
    check_len(y, y_hat)?;
    let yy = dot(y, y);
    let hh = dot(y_hat, y_hat);
    let mut r = MetricReport::new("sdr_loss", 0.0);
    if yy == 0.0 || hh == 0.0 {
        r.degenerate = true;
        return Ok(r);
    }
    r.value = (-dot(y, y_hat) / (yy.sqrt() * hh.sqrt())).clamp(-1.0, 1.0);
    Ok(r)
}

/// Weighted SDR loss of an estimate `y_hat` of clean `y` inside mixture `x`.
///
/// With noise `z = x - y` and estimated noise `ẑ = x - ŷ`:
/// `α·sdr(y, ŷ) + (1 - α)·sdr(z, ẑ)`, `α = ‖y‖² / (‖y‖² + ‖z‖²)`.
/// `alpha` is reported as an extra. A term whose own inputs have zero norm
/// contributes 0; the report is degenerate only when `y` and `z` are both
/// silent.
pub fn wsdr_loss(x: &[f32], y: &[f32], y_hat: &[f32]) -> Result<MetricReport> {
    check_len(x, y)?;
    check_len(y, y_hat)?;
    let to64 = |v: &[f32]| v.iter().map(|&s| f64::from(s)).collect::<Vec<f64>>();
    let (x, y, y_hat) = (to64(x), to64(y), to64(y_hat));
    let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
    let z_hat: Vec<f64> = x.iter().zip(&y_hat).map(|(a, b)| a - b).collect();
    let yy: f64 = y.iter().map(|v| v * v).sum();
    let zz: f64 = z.iter().map(|v| v * v).sum();

    let mut r = MetricReport::new("wsdr_loss", 0.0);
    if yy + zz == 0.0 {
        r.degenerate = true;
        r.extras.push(("alpha".into(), 0.5));
        return Ok(r);
    }
    let alpha = yy / (yy + zz);
    let (speech, _) = cosine_loss(&y, &y_hat);
    let (noise, _) = cosine_loss(&z, &z_hat);
    r.value = (alpha * speech + (1.0 - alpha) * noise).clamp(-1.0, 1.0);
    r.extras.push(("alpha".into(), alpha));
    Ok(r)
}

/// Scale-invariant SNR in dB, clamped to `±100`.
pub fn si_snr(y: &[f32], y_hat: &[f32]) -> Result<MetricReport> {
    check_len(y, y_hat)?;
    let n = y.len().max(1) as f64;
    let mean = |v: &[f32]| v.iter().map(|&s| f64::from(s)).sum::<f64>() / n;
    let (my, mh) = (mean(y), mean(y_hat));
    let y0: Vec<f64> = y.iter().map(|&s| f64::from(s) - my).collect();
    let h0: Vec<f64> = y_hat.iter().map(|&s| f64::from(s) - mh).collect();
    let yy: f64 = y0.iter().map(|v| v * v).sum();
    if yy == 0.0 {
        return Err(Error::Data("SI-SNR reference is silent".into()));
    }
    let scale = y0.iter().zip(&h0).map(|(a, b)| a * b).sum::<f64>() / yy;
    let (mut target, mut residual) = (0.0, 0.0);
    for (a, b) in y0.iter().zip(&h0) {
        let s = scale * a;
        target += s * s;
        residual += (b - s) * (b - s);
    }
    let mut r = MetricReport::new("si_snr_db", 0.0);
    r.value = if residual == 0.0 {
        SI_SNR_CAP_DB
    } else if target == 0.0 {
        -SI_SNR_CAP_DB
    } else {
        (10.0 * (target / residual).log10()).clamp(-SI_SNR_CAP_DB, SI_SNR_CAP_DB)
    };
    Ok(r)
}

/// Mean of squared sample differences.
pub fn mse(y: &[f32], y_hat: &[f32]) -> Result<MetricReport> {
    check_len(y, y_hat)?;
    let mut r = MetricReport::new("mse", 0.0);
    if y.is_empty() {
        r.degenerate = true;
        return Ok(r);
    }
    r.value = y
        .iter()
        .zip(y_hat)
        .map(|(&a, &b)| {
            let d = f64::from(a) - f64::from(b);
            d * d
        })
        .sum::<f64>()
        / y.len() as f64;
    Ok(r)
}

/// Real-time factor: processing time over audio duration.
pub fn rtf(processing_secs: f64, audio_secs: f64) -> Result<f64> {
    if !audio_secs.is_finite() || audio_secs <= 0.0 {
        return Err(Error::Data(format!(
            "audio duration {audio_secs} s must be positive"
        )));
    }
    if processing_secs.is_nan() || processing_secs < 0.0 {
        return Err(Error::Data(format!(
            "processing time {processing_secs} s is negative"
        )));
    }
    Ok(processing_secs / audio_secs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn sdr_cases() {
        let y = [1.0, -2.0, 0.5];
        assert!((sdr_loss(&y, &y).unwrap().value + 1.0).abs() < 1e-12);
        let neg: Vec<f32> = y.iter().map(|v| -v).collect();
        assert!((sdr_loss(&y, &neg).unwrap().value - 1.0).abs() < 1e-12);
        assert_eq!(sdr_loss(&[1.0, 0.0], &[0.0, 3.0]).unwrap().value, 0.0);
        let r = sdr_loss(&y, &[0.0; 3]).unwrap();
        assert!(r.degenerate);
        assert!(sdr_loss(&y, &[1.0]).is_err());
    }

    #[test]
    fn sdr_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, b) = (random(&mut rng, 50), random(&mut rng, 50));
        assert_eq!(
            sdr_loss(&a, &b).unwrap().value,
            sdr_loss(&b, &a).unwrap().value
        );
    }

    #[test]
    fn wsdr_perfect_and_symmetric_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = random(&mut rng, 32);
        let z = random(&mut rng, 32);
        let x: Vec<f32> = y.iter().zip(&z).map(|(a, b)| a + b).collect();
        let r = wsdr_loss(&x, &y, &y).unwrap();
        assert!((r.value + 1.0).abs() < 1e-6);

        let y = [1.0, 0.0, -1.0, 0.0];
        let z = [0.0, 1.0, 0.0, -1.0];
        let x: Vec<f32> = y.iter().zip(&z).map(|(a, b)| a + b).collect();
        assert_eq!(wsdr_loss(&x, &y, &x).unwrap().extra("alpha"), Some(0.5));
    }

    #[test]
    fn wsdr_matches_scalar_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&mut rng, 32);
        let y = random(&mut rng, 32);
        let yh = random(&mut rng, 32);
        let cos = |a: &[f64], b: &[f64]| {
            let ab: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
            let na = a.iter().map(|p| p * p).sum::<f64>().sqrt();
            let nb = b.iter().map(|p| p * p).sum::<f64>().sqrt();
            -ab / (na * nb)
        };
        let f = |v: &[f32]| v.iter().map(|&s| f64::from(s)).collect::<Vec<_>>();
        let (xd, yd, hd) = (f(&x), f(&y), f(&yh));
        let z: Vec<f64> = xd.iter().zip(&yd).map(|(a, b)| a - b).collect();
        let zh: Vec<f64> = xd.iter().zip(&hd).map(|(a, b)| a - b).collect();
        let ey: f64 = yd.iter().map(|v| v * v).sum();
        let ez: f64 = z.iter().map(|v| v * v).sum();
        let alpha = ey / (ey + ez);
        let expect = alpha * cos(&yd, &hd) + (1.0 - alpha) * cos(&z, &zh);
        let r = wsdr_loss(&x, &y, &yh).unwrap();
        assert!((r.value - expect).abs() < 1e-12);
        assert!((r.extra("alpha").unwrap() - alpha).abs() < 1e-12);
    }

    #[test]
    fn wsdr_degenerate_when_all_silent() {
        let zero = [0.0f32; 4];
        assert!(wsdr_loss(&zero, &zero, &zero).unwrap().degenerate);
    }

    #[test]
    fn si_snr_cases() {
        let n = 64;
        let y: Vec<f32> = (0..n)
            .map(|t| (std::f32::consts::TAU * t as f32 / 16.0).sin())
            .collect();
        let noise: Vec<f32> = (0..n)
            .map(|t| (std::f32::consts::TAU * t as f32 / 16.0).cos())
            .collect();
        assert_eq!(si_snr(&y, &y).unwrap().value, SI_SNR_CAP_DB);
        let doubled: Vec<f32> = y.iter().map(|v| 2.0 * v).collect();
        assert_eq!(si_snr(&y, &doubled).unwrap().value, SI_SNR_CAP_DB);
        let noisy: Vec<f32> = y.iter().zip(&noise).map(|(a, b)| a + b).collect();
        assert!(si_snr(&y, &noisy).unwrap().value.abs() < 1e-3);
        assert!(si_snr(&[0.5; 8], &[1.0; 8]).is_err());
    }

    #[test]
    fn rtf_cases() {
        assert!((rtf(0.4, 1.0).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(rtf(2.5, 2.5).unwrap(), 1.0);
        assert!(rtf(1.0, 0.0).is_err());
        assert!(rtf(1.0, -1.0).is_err());
    }

    #[test]
    fn mse_and_text_format() {
        let r = mse(&[1.0, 2.0], &[1.0, 4.0]).unwrap();
        assert_eq!(r.value, 2.0);
        assert_eq!(r.to_string(), "mse=2");
        let mut w = MetricReport::new("wsdr_loss", -1.0);
        w.extras.push(("alpha".into(), 0.25));
        assert_eq!(format_reports(&[w]), "wsdr_loss=-1\nwsdr_loss.alpha=0.25\n");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn wsdr_bounded_and_alpha_in_unit_interval(
                x in proptest::collection::vec(-1.0f32..1.0, 16),
                y in proptest::collection::vec(-1.0f32..1.0, 16),
                h in proptest::collection::vec(-1.0f32..1.0, 16),
            ) {
                let r = wsdr_loss(&x, &y, &h).unwrap();
                prop_assert!((-1.0..=1.0).contains(&r.value));
                let a = r.extra("alpha").unwrap();
                prop_assert!((0.0..=1.0).contains(&a));
            }

            #[test]
            fn si_snr_scale_invariant(
                y in proptest::collection::vec(-1.0f32..1.0, 32),
                n in proptest::collection::vec(-0.5f32..0.5, 32),
                scale in prop::sample::select(vec![0.5f32, 2.0, 4.0]),
            ) {
                let h: Vec<f32> = y.iter().zip(&n).map(|(a, b)| a + b).collect();
                let hs: Vec<f32> = h.iter().map(|v| v * scale).collect();
                let a = si_snr(&y, &h).unwrap().value;
                let b = si_snr(&y, &hs).unwrap().value;
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }
}

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::corpus::AudioRecording;
use crate::error::{Error, Result};

/// Peak amplitude after level normalization.
pub const TARGET_PEAK: f64 = 0.95;

/// Magnitude spectral subtraction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiseConfig {
    /// Over-subtraction factor applied to the noise magnitude.
    pub alpha: f64,
    /// Spectral floor, as a fraction of the noise magnitude.
    pub beta: f64,
    /// Fraction of lowest-energy frames averaged into the noise profile.
    pub noise_quantile: f64,
    /// Frames whose mean post-subtraction SNR falls below this (dB) are set to the floor.
    pub noise_frame_db: f64,
    /// Analysis frame length in seconds (rounded up to a power of two in samples).
    pub frame_len: f64,
    /// Shortest accepted input in seconds.
    pub min_duration: f64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 0.02,
            noise_quantile: 0.1,
            noise_frame_db: -12.0,
            frame_len: 0.032,
            min_duration: 1.0,
        }
    }
}

/// Spectral subtraction with the default settings.
pub fn denoise(rec: &AudioRecording) -> Result<AudioRecording> {
    denoise_with(rec, &DenoiseConfig::default())
}

/// Boll/Berouti-style magnitude spectral subtraction.
///
/// The noise profile is the mean magnitude spectrum of the lowest-energy
/// frames lying fully inside the signal. Each bin becomes
/// `max(|X| - alpha * N, beta * N)` with the noisy phase kept; a frame whose
/// mean `|Y| / N` is below `noise_frame_db` is replaced by the floor `beta * N`
/// altogether. Resynthesis is weighted overlap-add with a square-root
/// periodic Hann window at 50 % overlap, so an unmodified spectrum
/// reconstructs the input.
pub fn denoise_with(rec: &AudioRecording, cfg: &DenoiseConfig) -> Result<AudioRecording> {
    let duration = rec.duration();
    if duration < cfg.min_duration {
        return Err(Error::TooShort {
            id: rec.recording_id.clone(),
            duration,
            required: cfg.min_duration,
        });
    }
    let n_fft = ((cfg.frame_len * rec.sample_rate as f64).ceil() as usize).next_power_of_two().max(4);
    let hop = n_fft / 2;
    let len = rec.samples.len();

    // n_fft zeros on both sides: every original sample is covered by two frames
    let mut padded = vec![0.0; len + 2 * n_fft];
    padded[n_fft..n_fft + len].copy_from_slice(&rec.samples);
    let n_frames = (padded.len() - n_fft) / hop + 1;

    let window: Vec<f64> = (0..n_fft)
        .map(|i| (0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n_fft as f64).cos()).sqrt())
        .collect();

    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n_fft);
    let inv = planner.plan_fft_inverse(n_fft);

    let spectra: Vec<Vec<Complex<f64>>> = (0..n_frames)
        .map(|f| analyze_frame(&padded[f * hop..f * hop + n_fft], &window, &fwd))
        .collect();

    let n_bins = n_fft / 2 + 1;
    let noise = noise_profile(&spectra, n_fft, hop, len, n_bins, cfg.noise_quantile);

    let mut out = vec![0.0; padded.len()];
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let threshold = 10f64.powf(cfg.noise_frame_db / 20.0);
    for (f, spec) in spectra.iter().enumerate() {
        let mut gains = vec![1.0; n_bins];
        let (mut ratio_sum, mut ratio_n) = (0.0, 0usize);
        for k in 0..n_bins {
            let mag = spec[k].norm();
            let n = noise[k];
            let sub = (mag - cfg.alpha * n).max(cfg.beta * n);
            gains[k] = if mag > 0.0 { sub / mag } else { 0.0 };
            if n > 0.0 {
                ratio_sum += sub / n;
                ratio_n += 1;
            }
        }
        let noise_only = ratio_n > 0 && ratio_sum / (ratio_n as f64) < threshold;
        if noise_only {
            for k in 0..n_bins {
                let mag = spec[k].norm();
                gains[k] = if mag > 0.0 { cfg.beta * noise[k] / mag } else { 0.0 };
            }
        }
        for k in 0..n_bins {
            buf[k] = spec[k] * gains[k];
        }
        // Hermitian symmetry for a real output
        for k in n_bins..n_fft {
            buf[k] = buf[n_fft - k].conj();
        }
        inv.process(&mut buf);
        let start = f * hop;
        for i in 0..n_fft {
            out[start + i] += buf[i].re / n_fft as f64 * window[i];
        }
    }

    Ok(rec.with_samples(out[n_fft..n_fft + len].to_vec(), rec.sample_rate))
}

fn analyze_frame(frame: &[f64], window: &[f64], fft: &Arc<dyn Fft<f64>>) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = frame.iter().zip(window).map(|(x, w)| Complex::new(x * w, 0.0)).collect();
    fft.process(&mut buf);
    buf
}

fn noise_profile(
    spectra: &[Vec<Complex<f64>>],
    n_fft: usize,
    hop: usize,
    len: usize,
    n_bins: usize,
    quantile: f64,
) -> Vec<f64> {
    // frames lying entirely inside the original signal (which starts at n_fft in the padded buffer)
    let mut interior: Vec<(f64, usize)> = spectra
        .iter()
        .enumerate()
        .filter(|(f, _)| f * hop >= n_fft && f * hop + n_fft <= n_fft + len)
        .map(|(f, s)| (s[..n_bins].iter().map(|c| c.norm_sqr()).sum::<f64>(), f))
        .collect();
    if interior.is_empty() {
        // shorter than one frame: use every frame touching the signal
        interior = spectra
            .iter()
            .enumerate()
            .map(|(f, s)| (s[..n_bins].iter().map(|c| c.norm_sqr()).sum::<f64>(), f))
            .collect();
    }
    interior.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let take = ((interior.len() as f64 * quantile).ceil() as usize).clamp(1, interior.len());
    let mut noise = vec![0.0; n_bins];
    for &(_, f) in &interior[..take] {
        for (k, n) in noise.iter_mut().enumerate() {
            *n += spectra[f][k].norm();
        }
    }
    noise.iter_mut().for_each(|n| *n /= take as f64);
    noise
}

/// Scale so the absolute peak equals [`TARGET_PEAK`]; silent input is returned unchanged.
pub fn level_normalize(rec: &AudioRecording) -> AudioRecording {
    let peak = rec.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return rec.clone();
    }
    let g = TARGET_PEAK / peak;
    rec.with_samples(rec.samples.iter().map(|v| v * g).collect(), rec.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::testsig;

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    fn snr_db(clean: &[f64], test: &[f64]) -> f64 {
        let s: f64 = clean.iter().map(|v| v * v).sum();
        let e: f64 = clean.iter().zip(test).map(|(c, t)| (c - t).powi(2)).sum();
        10.0 * (s / e).log10()
    }

    /// Vowel bursts separated by silences: 0.3 s on, 0.2 s off.
    fn speechlike(secs: f64, sr: u32) -> Vec<f64> {
        let v = testsig::vowel(130.0, secs, sr);
        let period = (0.5 * sr as f64) as usize;
        let on = (0.3 * sr as f64) as usize;
        v.iter()
            .enumerate()
            .map(|(i, x)| {
                let p = i % period;
                if p < on {
                    x * (std::f64::consts::PI * p as f64 / on as f64).sin()
                } else {
                    0.0
                }
            })
            .collect()
    }

    #[test]
    fn improves_snr_on_noisy_speech() {
        let sr = 8000;
        let clean = speechlike(3.0, sr);
        let target_noise_rms = rms(&clean) / 10f64.powf(10.0 / 20.0);
        let noise = testsig::white(target_noise_rms, clean.len(), 11);
        let noisy: Vec<f64> = clean.iter().zip(&noise).map(|(c, n)| c + n).collect();
        let before = snr_db(&clean, &noisy);
        assert!((before - 10.0).abs() < 0.5);
        let out = denoise(&AudioRecording::from_samples(noisy, sr)).unwrap();
        assert_eq!(out.samples.len(), clean.len());
        let after = snr_db(&clean, &out.samples);
        assert!(after - before >= 3.0, "snr {before:.2} -> {after:.2} dB");
    }

    #[test]
    fn noiseless_input_is_unchanged() {
        let sr = 8000;
        let clean = speechlike(2.0, sr);
        let out = denoise(&AudioRecording::from_samples(clean.clone(), sr)).unwrap();
        let err = clean.iter().zip(&out.samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let peak = clean.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err <= 0.02 * peak, "max deviation {err}");
        assert!(err < 1e-9, "max deviation {err}");
    }

    #[test]
    fn stationary_noise_is_suppressed_to_floor() {
        let sr = 8000;
        let noise = testsig::white(0.1, 2 * sr as usize, 3);
        let out = denoise(&AudioRecording::from_samples(noise.clone(), sr)).unwrap();
        let ratio = rms(&out.samples) / rms(&noise);
        assert!(ratio <= 0.02, "rms ratio {ratio}");
    }

    #[test]
    fn too_short() {
        let rec = AudioRecording::from_samples(vec![0.0; 7999], 8000);
        assert!(matches!(denoise(&rec), Err(Error::TooShort { .. })));
    }

    #[test]
    fn level_normalization() {
        let x: Vec<f64> = (0..100).map(|i| 0.25 * (i as f64 * 0.3).sin()).collect();
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let out = level_normalize(&AudioRecording::from_samples(x.clone(), 8000));
        let out_peak = out.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((out_peak - 0.95).abs() < 1e-12);
        for (a, b) in x.iter().zip(&out.samples) {
            assert!((b - a * 0.95 / peak).abs() < 1e-12);
        }

        let zeros = AudioRecording::from_samples(vec![0.0; 10], 8000);
        assert_eq!(level_normalize(&zeros), zeros);

        let again = level_normalize(&out);
        for (a, b) in again.samples.iter().zip(&out.samples) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

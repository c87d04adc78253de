use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{centered_window, FrameSpec, LOG_FLOOR};
use crate::corpus::AudioRecording;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MfccConfig {
    pub n_mels: usize,
    pub n_fft: usize,
    pub f_min: f64,
    /// Upper filterbank edge; `None` means Nyquist.
    pub f_max: Option<f64>,
    pub n_ceps: usize,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            n_mels: 26,
            n_fft: 256,
            f_min: 0.0,
            f_max: None,
            n_ceps: 13,
        }
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the mel scale, each scaled to unit
/// weight sum so a flat spectrum gives equal filter outputs.
struct MelBank {
    /// (first bin, weights) per filter.
    filters: Vec<(usize, Vec<f64>)>,
}

impl MelBank {
    fn new(n_mels: usize, n_fft: usize, sr: f64, f_min: f64, f_max: f64) -> Self {
        let n_bins = n_fft / 2 + 1;
        let (m_lo, m_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = sr / n_fft as f64;
        let filters = (0..n_mels)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let mut w: Vec<f64> = (0..n_bins)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        if f > lo && f <= mid {
                            (f - lo) / (mid - lo)
                        } else if f > mid && f < hi {
                            (hi - f) / (hi - mid)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let sum: f64 = w.iter().sum();
                if sum <= 0.0 {
                    // narrower than one bin: take the nearest bin
                    let k = ((mid / bin_hz).round() as usize).min(n_bins - 1);
                    w[k] = 1.0;
                } else {
                    w.iter_mut().for_each(|v| *v /= sum);
                }
                let first = w.iter().position(|&v| v != 0.0).unwrap_or(0);
                let last = w.iter().rposition(|&v| v != 0.0).unwrap_or(0);
                (first, w[first..=last].to_vec())
            })
            .collect();
        Self { filters }
    }

    fn apply(&self, power: &[f64], out: &mut [f64]) {
        for ((first, w), o) in self.filters.iter().zip(out.iter_mut()) {
            *o = w.iter().zip(&power[*first..]).map(|(a, b)| a * b).sum();
        }
    }
}

/// Orthonormal DCT-II. Coefficients above 0 ignore constant offsets, so they
/// are computed relative to `x[0]` and a constant input gives exactly zero.
struct Dct {
    n: usize,
    /// `basis[c][m]` for `m < n / 2`.
    basis: Vec<Vec<f64>>,
}

impl Dct {
    fn new(n: usize, n_out: usize) -> Self {
        let half = n.div_ceil(2);
        let basis = (0..n_out)
            .map(|c| {
                let scale = if c == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
                (0..half)
                    .map(|m| scale * (std::f64::consts::PI * c as f64 * (m as f64 + 0.5) / n as f64).cos())
                    .collect()
            })
            .collect();
        Self { n, basis }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        let half = n / 2;
        let offset = x[0];
        for (c, (b, o)) in self.basis.iter().zip(out.iter_mut()).enumerate() {
            let shift = if c == 0 { 0.0 } else { offset };
            let mut acc = 0.0;
            for m in 0..half {
                let (p, q) = (x[m] - shift, x[n - 1 - m] - shift);
                let pair = if c % 2 == 0 { p + q } else { p - q };
                acc += pair * b[m];
            }
            if n % 2 == 1 && c % 2 == 0 {
                acc += (x[half] - shift) * b[half];
            }
            *o = acc;
        }
    }
}

struct MfccEngine {
    window: Vec<f64>,
    n_fft: usize,
    fft: Arc<dyn Fft<f64>>,
    bank: MelBank,
    dct: Dct,
    n_mels: usize,
    n_ceps: usize,
}

impl MfccEngine {
    fn new(win_len: usize, sr: f64, cfg: &MfccConfig) -> Result<Self> {
        if cfg.n_fft < win_len {
            return Err(Error::InvalidParameter(format!(
                "n_fft {} shorter than the {win_len}-sample window",
                cfg.n_fft
            )));
        }
        if cfg.n_mels < 2 || cfg.n_ceps < 2 || cfg.n_ceps > cfg.n_mels {
            return Err(Error::InvalidParameter(format!(
                "need 2 <= n_ceps ({}) <= n_mels ({})",
                cfg.n_ceps, cfg.n_mels
            )));
        }
        let f_max = cfg.f_max.unwrap_or(sr / 2.0).min(sr / 2.0);
        if !(cfg.f_min >= 0.0 && cfg.f_min < f_max) {
            return Err(Error::InvalidParameter(format!("bad filterbank range {}..{f_max}", cfg.f_min)));
        }
        // symmetric Hamming
        let window = (0..win_len)
            .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (win_len - 1).max(1) as f64).cos())
            .collect();
        Ok(Self {
            window,
            n_fft: cfg.n_fft,
            fft: FftPlanner::new().plan_fft_forward(cfg.n_fft),
            bank: MelBank::new(cfg.n_mels, cfg.n_fft, sr, cfg.f_min, f_max),
            dct: Dct::new(cfg.n_mels, cfg.n_ceps),
            n_mels: cfg.n_mels,
            n_ceps: cfg.n_ceps,
        })
    }

    fn frame(&self, samples: &[f64], buf: &mut Vec<Complex<f64>>, out: &mut [f64]) {
        buf.clear();
        buf.extend(samples.iter().zip(&self.window).map(|(x, w)| Complex::new(x * w, 0.0)));
        buf.resize(self.n_fft, Complex::new(0.0, 0.0));
        self.fft.process(buf);
        let power: Vec<f64> = buf[..self.n_fft / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
        let mut mel = vec![0.0; self.n_mels];
        self.bank.apply(&power, &mut mel);
        mel.iter_mut().for_each(|v| *v = v.max(LOG_FLOOR).ln());
        self.dct.apply(&mel, out);
    }
}

/// Cepstral coefficients `C0..C{n_ceps-1}` of one analysis window
/// (Hamming → power spectrum → mel bank → log → DCT-II).
pub fn mfcc_frame(samples: &[f64], sample_rate: u32, cfg: &MfccConfig) -> Result<Vec<f64>> {
    let engine = MfccEngine::new(samples.len(), sample_rate as f64, cfg)?;
    let mut buf = Vec::with_capacity(cfg.n_fft);
    let mut out = vec![0.0; engine.n_ceps];
    engine.frame(samples, &mut buf, &mut out);
    Ok(out)
}

/// First cepstral coefficient (C1) per frame: positive for spectra tilted
/// towards low frequencies, negative for high-frequency emphasis.
pub fn spectral_tilt(rec: &AudioRecording, spec: &FrameSpec, cfg: &MfccConfig) -> Result<Vec<f64>> {
    let w = spec.window_samples();
    let hop = spec.hop_samples();
    let engine = MfccEngine::new(w, rec.sample_rate as f64, cfg)?;
    let mut seg = vec![0.0; w];
    let mut buf = Vec::with_capacity(cfg.n_fft);
    let mut ceps = vec![0.0; engine.n_ceps];
    Ok((0..spec.frame_count(rec.samples.len()))
        .map(|i| {
            centered_window(&rec.samples, i * hop, w, &mut seg);
            engine.frame(&seg, &mut buf, &mut ceps);
            ceps[1]
        })
        .collect())
}

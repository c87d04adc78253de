//! Syllable segmentation from the amplitude envelope with a damped
//! harmonic oscillator.
//!
//! The rectified, low-passed envelope drives
//! `x'' + (ω/Q)·x' + ω²·x = ω²·e(t)` with `ω = 2π·center_freq`, integrated by
//! semi-implicit Euler at the envelope rate. Syllable nuclei are displacement
//! maxima; boundaries sit at the displacement minima between them.

use serde::{Deserialize, Serialize};

use crate::corpus::{AudioRecording, Tier, UnitSegment};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OscillatorConfig {
    /// Hz.
    pub center_freq: f64,
    pub q_factor: f64,
    /// Hz.
    pub envelope_rate: f64,
    /// Envelope low-pass cutoff in Hz.
    pub envelope_cutoff: f64,
    /// Maxima below this fraction of the global maximum are not nuclei.
    pub peak_threshold: f64,
    /// Seconds; shorter segments are merged into a neighbour.
    pub min_duration: f64,
}

impl Default for OscillatorConfig {
    fn default() -> Self {
        Self {
            center_freq: 5.0,
            q_factor: 0.5,
            envelope_rate: 1000.0,
            envelope_cutoff: 30.0,
            peak_threshold: 0.1,
            min_duration: 0.05,
        }
    }
}

impl OscillatorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.center_freq > 0.0
            && self.q_factor > 0.0
            && self.envelope_rate > 0.0
            && self.envelope_cutoff > 0.0
            && self.envelope_cutoff < self.envelope_rate / 2.0
            && (0.0..1.0).contains(&self.peak_threshold)
            && self.min_duration >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid oscillator configuration {self:?}")))
        }
    }

    /// Steady-state displacement per unit of constant drive.
    pub fn drive_gain(&self) -> f64 {
        let w = 2.0 * std::f64::consts::PI * self.center_freq;
        w * w
    }
}

/// Second-order low-pass section (bilinear transform), direct form I.
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn lowpass(cutoff: f64, q: f64, fs: f64) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * cutoff / fs;
        let (s, c) = w0.sin_cos();
        let alpha = s / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b: [(1.0 - c) / 2.0 / a0, (1.0 - c) / a0, (1.0 - c) / 2.0 / a0],
            a: [-2.0 * c / a0, (1.0 - alpha) / a0],
        }
    }

    fn run(&self, x: &[f64]) -> Vec<f64> {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        x.iter()
            .map(|&x0| {
                let y0 = self.b[0] * x0 + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
                (x2, x1, y2, y1) = (x1, x0, y1, y0);
                y0
            })
            .collect()
    }
}

/// Full-wave rectify, 4th-order Butterworth low-pass, resample to the envelope rate.
pub fn compute_envelope(rec: &AudioRecording, config: &OscillatorConfig) -> Vec<f64> {
    let fs = rec.sample_rate as f64;
    if rec.samples.is_empty() {
        return Vec::new();
    }
    let rectified: Vec<f64> = rec.samples.iter().map(|v| v.abs()).collect();
    let cutoff = config.envelope_cutoff.min(0.45 * fs);
    // Butterworth pole pair Qs for order 4
    let smooth = Biquad::lowpass(cutoff, 1.306_562_964_876_376_6, fs)
        .run(&Biquad::lowpass(cutoff, 0.541_196_100_146_197, fs).run(&rectified));

    let step = fs / config.envelope_rate;
    let n_out = ((smooth.len() - 1) as f64 / step).floor() as usize + 1;
    (0..n_out)
        .map(|j| {
            let pos = j as f64 * step;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            let v = if i + 1 < smooth.len() {
                smooth[i] * (1.0 - frac) + smooth[i + 1] * frac
            } else {
                smooth[i]
            };
            v.max(0.0)
        })
        .collect()
}

/// Oscillator displacement for the given drive, starting at rest.
pub fn oscillate(envelope: &[f64], config: &OscillatorConfig) -> Vec<f64> {
    let w = 2.0 * std::f64::consts::PI * config.center_freq;
    let damping = w / config.q_factor;
    let k = config.drive_gain();
    let dt = 1.0 / config.envelope_rate;
    let (mut x, mut v) = (0.0f64, 0.0f64);
    envelope
        .iter()
        .map(|&e| {
            v += dt * (k * e - damping * v - w * w * x);
            x += dt * v;
            x
        })
        .collect()
}

#[derive(Debug, Clone)]
struct Seg {
    start: usize,
    end: usize,
    peak: f64,
}

/// Syllable segments from an oscillator displacement sampled at the envelope rate.
///
/// Segments are contiguous from the minimum before the first nucleus to the
/// minimum after the last. A segment shorter than `min_dur` is merged across
/// whichever of its internal boundaries is weaker (smaller drop below the
/// lower adjacent peak); a lone survivor shorter than `min_dur` is dropped.
pub fn detect_syllables(displacement: &[f64], config: &OscillatorConfig, min_dur: f64) -> Vec<UnitSegment> {
    let x = displacement;
    let n = x.len();
    let gmax = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if n < 2 || gmax <= 1e-12 {
        return Vec::new();
    }
    let floor = config.peak_threshold * gmax;
    let peaks: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || x[i] > x[i - 1];
            let right = i + 1 == n || x[i] >= x[i + 1];
            left && right && x[i] >= floor
        })
        .collect();
    if peaks.is_empty() {
        return Vec::new();
    }

    // latest minimum before the first peak, earliest after the last
    let first = peaks[0];
    let mut start = first;
    for i in (0..=first).rev() {
        if x[i] < x[start] {
            start = i;
        }
    }
    let start = (0..=first).rev().find(|&i| x[i] == x[start]).unwrap_or(start);
    let last = *peaks.last().unwrap_or(&first);
    let mut end = last;
    for (i, &v) in x.iter().enumerate().skip(last) {
        if v < x[end] {
            end = i;
        }
    }

    let mut bounds = vec![start];
    for w in peaks.windows(2) {
        let mut b = w[0] + 1;
        for i in w[0] + 1..w[1] {
            if x[i] < x[b] {
                b = i;
            }
        }
        bounds.push(b);
    }
    bounds.push(end.max(last));

    let mut segs: Vec<Seg> = peaks
        .iter()
        .enumerate()
        .map(|(j, &p)| Seg {
            start: bounds[j],
            end: bounds[j + 1],
            peak: x[p],
        })
        .collect();
    // a nucleus at the very last sample has an empty tail
    segs.retain(|s| s.end > s.start);

    let min_len = min_dur * config.envelope_rate;
    let strength = |segs: &[Seg], j: usize| segs[j].peak.min(segs[j + 1].peak) - x[segs[j].end];
    loop {
        let short = segs
            .iter()
            .enumerate()
            .filter(|(_, s)| ((s.end - s.start) as f64) < min_len)
            .min_by_key(|(_, s)| s.end - s.start)
            .map(|(j, _)| j);
        let Some(j) = short else { break };
        if segs.len() == 1 {
            segs.clear();
            break;
        }
        // merge j with j-1 (boundary j-1) or j+1 (boundary j)
        let left = (j > 0).then(|| strength(&segs, j - 1));
        let right = (j + 1 < segs.len()).then(|| strength(&segs, j));
        let merge_left = match (left, right) {
            (Some(l), Some(r)) => l <= r,
            (Some(_), None) => true,
            _ => false,
        };
        let (a, b) = if merge_left { (j - 1, j) } else { (j, j + 1) };
        segs[a].end = segs[b].end;
        segs[a].peak = segs[a].peak.max(segs[b].peak);
        segs.remove(b);
    }

    segs.iter()
        .map(|s| UnitSegment {
            start: s.start as f64 / config.envelope_rate,
            end: s.end as f64 / config.envelope_rate,
            tier: Tier::Syllable,
            text: None,
            recording_id: String::new(),
        })
        .collect()
}

/// Envelope → oscillator → boundaries for one recording.
pub fn syllabify(rec: &AudioRecording, config: &OscillatorConfig) -> Result<Vec<UnitSegment>> {
    config.validate()?;
    let env = compute_envelope(rec, config);
    let disp = oscillate(&env, config);
    let mut units = detect_syllables(&disp, config, config.min_duration);
    for u in &mut units {
        u.recording_id = rec.recording_id.clone();
        u.end = u.end.min(rec.duration());
    }
    units.retain(|u| u.end > u.start);
    Ok(units)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn am_tone(mod_hz: f64, secs: f64, sr: u32, amp: f64) -> AudioRecording {
        let n = (secs * sr as f64) as usize;
        let x = (0..n)
            .map(|i| {
                let t = i as f64 / sr as f64;
                let m = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * mod_hz * t).cos());
                amp * m * (2.0 * std::f64::consts::PI * 1000.0 * t).sin()
            })
            .collect();
        AudioRecording::from_samples(x, sr)
    }

    fn dominant_freq(x: &[f64], rate: f64, lo: f64, hi: f64) -> f64 {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let mut best = (0.0, lo);
        let mut f = lo;
        while f <= hi {
            let w = 2.0 * std::f64::consts::PI * f / rate;
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in x.iter().enumerate() {
                re += (v - mean) * (w * i as f64).cos();
                im += (v - mean) * (w * i as f64).sin();
            }
            let p = re * re + im * im;
            if p > best.0 {
                best = (p, f);
            }
            f += 0.01;
        }
        best.1
    }

    #[test]
    fn silence_gives_nothing() {
        let cfg = OscillatorConfig::default();
        let rec = AudioRecording::from_samples(vec![0.0; 8000], 8000);
        let env = compute_envelope(&rec, &cfg);
        assert!(env.iter().all(|&v| v == 0.0));
        assert!(oscillate(&env, &cfg).iter().all(|&v| v == 0.0));
        assert!(syllabify(&rec, &cfg).unwrap().is_empty());
    }

    #[test]
    fn steady_sine_has_flat_envelope() {
        let cfg = OscillatorConfig::default();
        let n = 8000;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / 8000.0).sin()).collect();
        let env = compute_envelope(&AudioRecording::from_samples(x, 8000), &cfg);
        let tail = &env[50..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        // mean of |sin| at the eight sample phases of a 1 kHz tone at 8 kHz
        let want = (0..8).map(|i| (i as f64 * std::f64::consts::PI / 4.0).sin().abs()).sum::<f64>() / 8.0;
        assert!((mean - want).abs() < 0.01 * want, "{mean} vs {want}");
        for &v in tail {
            assert!((v - mean).abs() <= 0.05 * mean);
        }
    }

    #[test]
    fn modulated_tone_envelope_period() {
        let cfg = OscillatorConfig::default();
        let env = compute_envelope(&am_tone(4.0, 3.0, 8000, 0.8), &cfg);
        let f = dominant_freq(&env, cfg.envelope_rate, 2.0, 8.0);
        assert!((f - 4.0).abs() <= 0.08, "{f}");
    }

    #[test]
    fn step_response_has_no_overshoot() {
        let cfg = OscillatorConfig::default();
        let x = oscillate(&vec![1.0; 3000], &cfg);
        // k = ω², so the steady state is 1
        let target = cfg.drive_gain() / (2.0 * std::f64::consts::PI * cfg.center_freq).powi(2);
        assert!((x[2999] - target).abs() < 1e-3);
        assert!(x.iter().all(|&v| v <= 1.05 * target));
        assert!(x.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    /// Steady-state amplitude of the displacement for a unit sinusoidal drive.
    fn gain_at(freq: f64, cfg: &OscillatorConfig) -> f64 {
        let n = (cfg.envelope_rate * 10.0) as usize;
        let drive: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / cfg.envelope_rate).sin())
            .collect();
        let x = oscillate(&drive, cfg);
        x[n / 2..].iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn frequency_response_matches_critically_damped_form() {
        // |H(f)| = 1 / (1 + (f / f0)^2) for Q = 0.5
        let cfg = OscillatorConfig::default();
        for f in [1.0, 5.0, 20.0] {
            let want = 1.0 / (1.0 + (f / cfg.center_freq).powi(2));
            let got = gain_at(f, &cfg);
            assert!((got - want).abs() < 0.03 * want + 2e-3, "{f} Hz: {got} vs {want}");
        }
        // the drive at the centre frequency is followed at 5 Hz
        let n = 10_000;
        let drive: Vec<f64> = (0..n).map(|i| 1.0 + (2.0 * std::f64::consts::PI * 5.0 * i as f64 / 1000.0).sin()).collect();
        let x = oscillate(&drive, &cfg);
        assert!((dominant_freq(&x[2000..], 1000.0, 2.0, 8.0) - 5.0).abs() < 0.05);
    }

    #[test]
    fn am_tones_syllable_counts() {
        let cfg = OscillatorConfig::default();
        let four = syllabify(&am_tone(4.0, 2.0, 8000, 0.8), &cfg).unwrap();
        assert!((four.len() as i64 - 8).abs() <= 1, "{}", four.len());
        let starts: Vec<f64> = four.iter().map(|u| u.start).collect();
        for w in starts.windows(2).skip(1) {
            let d = w[1] - w[0];
            assert!((d - 0.25).abs() <= 0.05, "spacing {d}");
        }
        let six = syllabify(&am_tone(6.0, 2.0, 8000, 0.8), &cfg).unwrap();
        assert!((six.len() as i64 - 12).abs() <= 2, "{}", six.len());
    }

    #[test]
    fn segments_ordered_and_long_enough() {
        let cfg = OscillatorConfig::default();
        for hz in [3.0, 4.0, 6.0, 9.0, 14.0] {
            let units = syllabify(&am_tone(hz, 2.0, 8000, 0.5), &cfg).unwrap();
            for u in &units {
                assert!(u.end - u.start >= cfg.min_duration - 1e-9);
                assert_eq!(u.tier, Tier::Syllable);
            }
            for w in units.windows(2) {
                assert!(w[1].start >= w[0].end);
            }
        }
    }

    #[test]
    fn time_shift_equivariance() {
        let cfg = OscillatorConfig::default();
        let base = am_tone(4.0, 2.0, 8000, 0.8);
        let mut shifted = vec![0.0; 800];
        shifted.extend(&base.samples);
        let a = syllabify(&base, &cfg).unwrap();
        let b = syllabify(&AudioRecording::from_samples(shifted, 8000), &cfg).unwrap();
        assert_eq!(a.len(), b.len());
        let tol = 1.0 / cfg.envelope_rate + 1e-9;
        for (u, v) in a.iter().zip(&b) {
            assert!((v.start - u.start - 0.1).abs() <= tol, "{} vs {}", u.start, v.start);
            assert!((v.end - u.end - 0.1).abs() <= tol || (u.end - base.duration()).abs() < 1e-9);
        }
    }

    #[test]
    fn amplitude_changes_count_by_at_most_one() {
        let cfg = OscillatorConfig::default();
        for hz in [4.0, 6.0] {
            let a = syllabify(&am_tone(hz, 2.0, 8000, 0.4), &cfg).unwrap().len() as i64;
            let b = syllabify(&am_tone(hz, 2.0, 8000, 0.8), &cfg).unwrap().len() as i64;
            assert!((a - b).abs() <= 1);
        }
    }

    /// Piecewise-linear curve through `(index, value)` knots.
    fn knots(points: &[(usize, f64)]) -> Vec<f64> {
        let mut x = Vec::new();
        for w in points.windows(2) {
            let ((i0, v0), (i1, v1)) = (w[0], w[1]);
            for i in i0..i1 {
                x.push(v0 + (v1 - v0) * (i - i0) as f64 / (i1 - i0) as f64);
            }
        }
        x.push(points.last().unwrap().1);
        x
    }

    #[test]
    fn short_segments_merge_at_weaker_boundary() {
        let cfg = OscillatorConfig::default();
        // segments [0,70) [70,90) [90,150) [150,250); the 20-sample one is short.
        // boundary 70 drops 0.2 below the lower neighbouring peak, boundary 90 drops 0.3
        let x = knots(&[(0, 0.0), (50, 1.0), (70, 0.6), (80, 0.8), (90, 0.5), (100, 0.9), (150, 0.0), (200, 1.0), (250, 0.0)]);
        let segs = detect_syllables(&x, &cfg, 0.05);
        let bounds: Vec<(f64, f64)> = segs.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(bounds, vec![(0.0, 0.09), (0.09, 0.15), (0.15, 0.25)]);

        // with the depths swapped the short segment joins its right neighbour
        let x = knots(&[(0, 0.0), (50, 1.0), (70, 0.5), (80, 0.8), (90, 0.6), (100, 0.9), (150, 0.0), (200, 1.0), (250, 0.0)]);
        let segs = detect_syllables(&x, &cfg, 0.05);
        let bounds: Vec<(f64, f64)> = segs.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(bounds, vec![(0.0, 0.07), (0.07, 0.15), (0.15, 0.25)]);
    }

    #[test]
    fn lone_short_segment_is_dropped() {
        let cfg = OscillatorConfig::default();
        let x = knots(&[(0, 0.0), (10, 1.0), (30, 0.0), (60, 0.0)]);
        assert!(detect_syllables(&x, &cfg, 0.05).is_empty());
    }
}

//! Signal pre-processing and frame-level prosodic analysis.
//!
//! Pipeline for one recording: spectral-subtraction denoising, peak level
//! normalization, anti-aliased resampling to the analysis rate, then frame
//! energy, F0 and spectral tilt on a shared frame grid.

mod denoise;
mod energy;
mod mfcc;
mod pitch;
mod resample;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::AudioRecording;
use crate::error::{Error, Result};

pub use denoise::{denoise, denoise_with, level_normalize, DenoiseConfig, TARGET_PEAK};
pub use energy::frame_energy;
pub use mfcc::{mfcc_frame, spectral_tilt, MfccConfig};
pub use pitch::{track_f0, track_f0_with, F0Track, PitchConfig};
pub use resample::resample;

/// Floor applied inside every logarithm of a power or energy.
pub const LOG_FLOOR: f64 = 1e-10;

/// Analysis window, hop and sample rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSpec {
    /// Seconds.
    pub window_len: f64,
    /// Seconds.
    pub hop: f64,
    pub sample_rate: u32,
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self {
            window_len: 0.025,
            hop: 0.005,
            sample_rate: 8000,
        }
    }
}

impl FrameSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.hop > 0.0 && self.hop <= self.window_len) {
            return Err(Error::InvalidParameter(format!(
                "frame hop {} must be in (0, window_len = {}]",
                self.hop, self.window_len
            )));
        }
        if self.sample_rate == 0 || self.window_samples() < 2 || self.hop_samples() < 1 {
            return Err(Error::InvalidParameter(format!(
                "window of {} s at {} Hz is shorter than 2 samples",
                self.window_len, self.sample_rate
            )));
        }
        Ok(())
    }

    pub fn window_samples(&self) -> usize {
        (self.window_len * self.sample_rate as f64).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.hop * self.sample_rate as f64).round() as usize
    }

    /// `floor((n - 1) / hop) + 1` frames for `n >= 1` samples, 0 otherwise.
    pub fn frame_count(&self, n_samples: usize) -> usize {
        if n_samples == 0 {
            0
        } else {
            (n_samples - 1) / self.hop_samples() + 1
        }
    }

    /// Frame centres in seconds.
    pub fn frame_times(&self, n_samples: usize) -> Vec<f64> {
        let hop = self.hop_samples();
        (0..self.frame_count(n_samples))
            .map(|i| (i * hop) as f64 / self.sample_rate as f64)
            .collect()
    }
}

/// Copy the `w`-sample window centred on sample `center` into `out`,
/// zero-padding beyond the signal edges. Covers `center - w/2 .. center + w - w/2`.
pub(crate) fn centered_window(x: &[f64], center: usize, w: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), w);
    let first = center as isize - (w / 2) as isize;
    for (j, o) in out.iter_mut().enumerate() {
        let idx = first + j as isize;
        *o = if idx >= 0 && (idx as usize) < x.len() {
            x[idx as usize]
        } else {
            0.0
        };
    }
}

/// Per-frame energy, F0 (0 = unvoiced), voicing and C1 tilt on one frame grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProsodicTrack {
    pub recording_id: String,
    pub frame_times: Vec<f64>,
    pub energy: Vec<f64>,
    pub f0: Vec<f64>,
    pub voiced: Vec<bool>,
    pub tilt: Vec<f64>,
}

impl ProsodicTrack {
    pub fn len(&self) -> usize {
        self.frame_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_times.is_empty()
    }

    pub fn is_aligned(&self) -> bool {
        let n = self.len();
        self.energy.len() == n && self.f0.len() == n && self.voiced.len() == n && self.tilt.len() == n
    }

    /// `frame_time,energy,f0,voiced,tilt` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame_time,energy,f0,voiced,tilt\n");
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                self.frame_times[i],
                self.energy[i],
                self.f0[i],
                u8::from(self.voiced[i]),
                self.tilt[i]
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Analysis settings for the whole front end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct FrontEndConfig {
    pub frame: FrameSpec,
    pub denoise: DenoiseConfig,
    pub pitch: PitchConfig,
    pub mfcc: MfccConfig,
}

/// Denoise, level-normalize and resample to the analysis rate.
pub fn preprocess(rec: &AudioRecording, config: &FrontEndConfig) -> Result<AudioRecording> {
    config.frame.validate()?;
    let clean = denoise_with(rec, &config.denoise)?;
    let leveled = level_normalize(&clean);
    resample(&leveled, config.frame.sample_rate)
}

/// Frame analyses on an already pre-processed recording.
pub fn analyze(rec: &AudioRecording, config: &FrontEndConfig) -> Result<ProsodicTrack> {
    let spec = &config.frame;
    spec.validate()?;
    if rec.sample_rate != spec.sample_rate {
        return Err(Error::InvalidParameter(format!(
            "analysis expects {} Hz, recording is {} Hz",
            spec.sample_rate, rec.sample_rate
        )));
    }
    let energy = frame_energy(rec, spec);
    let f0 = track_f0_with(rec, spec, &config.pitch);
    let tilt = spectral_tilt(rec, spec, &config.mfcc)?;
    Ok(ProsodicTrack {
        recording_id: rec.recording_id.clone(),
        frame_times: spec.frame_times(rec.samples.len()),
        energy,
        f0: f0.f0,
        voiced: f0.voiced,
        tilt,
    })
}

/// Full front end with default component settings and the given frame spec.
pub fn extract_tracks(rec: &AudioRecording, spec: &FrameSpec) -> Result<ProsodicTrack> {
    let config = FrontEndConfig {
        frame: *spec,
        ..Default::default()
    };
    analyze(&preprocess(rec, &config)?, &config)
}

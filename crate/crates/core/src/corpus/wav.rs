use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioRecording;
use crate::error::{Error, Result};

/// Read an 8- or 16-bit PCM WAV file as mono samples in [-1, 1].
///
/// Multi-channel files are averaged to mono. The recording id is the file stem;
/// speaker and dialect are left empty for the caller to fill in.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioRecording> {
    let path = path.as_ref();
    let wav_err = |reason: String| Error::Wav {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => wav_err(other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.sample_format != SampleFormat::Int || !(spec.bits_per_sample == 8 || spec.bits_per_sample == 16) {
        return Err(Error::UnsupportedEncoding {
            path: path.to_path_buf(),
            reason: format!("{:?} {}-bit", spec.sample_format, spec.bits_per_sample),
        });
    }
    if spec.sample_rate == 0 {
        return Err(wav_err("sample rate 0".into()));
    }
    let scale = match spec.bits_per_sample {
        8 => 128.0,
        _ => 32768.0,
    };
    let interleaved: Vec<i32> = reader
        .samples::<i32>()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| wav_err(e.to_string()))?;
    let channels = spec.channels.max(1) as usize;
    if interleaved.len() < channels {
        return Err(Error::EmptyAudio(path.display().to_string()));
    }
    let samples = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().map(|&s| s as f64 / scale).sum::<f64>() / channels as f64)
        .collect();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(AudioRecording::from_samples(samples, spec.sample_rate).with_meta(id, "", ""))
}

/// Write mono 16-bit PCM. Samples are clipped to [-1, 1].
pub fn write_wav(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let to_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    };
    let mut writer = WavWriter::create(path, spec).map_err(to_err)?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(to_err)?;
    }
    writer.finalize().map_err(to_err)
}

/// Duration in seconds and sample rate, read from the header only.
pub(crate) fn wav_header_duration(path: &Path) -> Result<(f64, u32)> {
    let reader = WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;
    let spec = reader.spec();
    if spec.sample_rate == 0 {
        return Err(Error::Wav {
            path: path.to_path_buf(),
            reason: "sample rate 0".into(),
        });
    }
    Ok((reader.duration() as f64 / spec.sample_rate as f64, spec.sample_rate))
}

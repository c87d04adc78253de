use super::FrameSpec;
use crate::corpus::AudioRecording;

/// Short-time energy: for each frame centre `t`, the sum of `x(t + τ)²` for
/// `τ` in `-w/2 .. w - w/2`, with zeros outside the signal.
pub fn frame_energy(rec: &AudioRecording, spec: &FrameSpec) -> Vec<f64> {
    let x = &rec.samples;
    let w = spec.window_samples();
    let hop = spec.hop_samples();
    let half = w / 2;
    (0..spec.frame_count(x.len()))
        .map(|i| {
            let center = i * hop;
            let lo = center.saturating_sub(half);
            let hi = (center + w - half).min(x.len());
            x[lo..hi].iter().map(|v| v * v).sum()
        })
        .collect()
}

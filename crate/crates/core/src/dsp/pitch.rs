//! NCCF candidate generation with dynamic-programming smoothing.
//!
//! Each frame yields up to `max_candidates` voiced hypotheses (local maxima of
//! the normalized cross-correlation above the voicing threshold, refined by
//! parabolic interpolation) plus one unvoiced hypothesis. A Viterbi pass picks
//! the cheapest path, charging `octave_cost × |log2(f_t / f_{t-1})|` between
//! voiced frames and `voicing_change_cost` for each voiced/unvoiced switch.

use serde::{Deserialize, Serialize};

use super::{centered_window, FrameSpec};
use crate::corpus::AudioRecording;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PitchConfig {
    pub f0_min: f64,
    pub f0_max: f64,
    /// NCCF peak height needed for a voiced candidate.
    pub voicing_threshold: f64,
    /// Transition cost per octave of F0 change.
    pub octave_cost: f64,
    pub voicing_change_cost: f64,
    /// Penalty growing linearly with lag, discouraging sub-harmonic picks.
    pub lag_weight: f64,
    pub max_candidates: usize,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            f0_min: 60.0,
            f0_max: 400.0,
            voicing_threshold: 0.3,
            octave_cost: 0.35,
            voicing_change_cost: 0.2,
            lag_weight: 0.1,
            max_candidates: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct F0Track {
    /// Hz, 0 on unvoiced frames.
    pub f0: Vec<f64>,
    pub voiced: Vec<bool>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    /// 0 for the unvoiced hypothesis.
    f0: f64,
    cost: f64,
}

/// Track F0 with the default tracker settings and the given search range.
pub fn track_f0(rec: &AudioRecording, spec: &FrameSpec, f0_min: f64, f0_max: f64) -> F0Track {
    let cfg = PitchConfig {
        f0_min,
        f0_max,
        ..PitchConfig::default()
    };
    track_f0_with(rec, spec, &cfg)
}

pub fn track_f0_with(rec: &AudioRecording, spec: &FrameSpec, cfg: &PitchConfig) -> F0Track {
    let x = &rec.samples;
    let sr = rec.sample_rate as f64;
    let w = spec.window_samples();
    let hop = spec.hop_samples();
    let n_frames = spec.frame_count(x.len());
    let lag_min = ((sr / cfg.f0_max).floor() as usize).max(1);
    let lag_max = (sr / cfg.f0_min).ceil() as usize;

    let mut seg = vec![0.0; w + lag_max + 1];
    let mut r = vec![0.0; lag_max + 2];
    let mut lattice: Vec<Vec<Candidate>> = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        // window plus the lagged tail, starting at the frame's first sample
        centered_window(x, i * hop + (w + lag_max).div_ceil(2) - w / 2, w + lag_max + 1, &mut seg);
        nccf(&seg, w, lag_min.saturating_sub(1).max(1), lag_max + 1, &mut r);
        lattice.push(candidates(&r, lag_min, lag_max, sr, cfg));
    }
    viterbi(&lattice, cfg)
}

/// Normalized cross-correlation of `seg[..w]` with `seg[k..k + w]` for `k` in `lo..=hi`.
fn nccf(seg: &[f64], w: usize, lo: usize, hi: usize, r: &mut [f64]) {
    r.iter_mut().for_each(|v| *v = 0.0);
    let head = &seg[..w];
    let e0: f64 = head.iter().map(|v| v * v).sum();
    if e0 <= 1e-12 * w as f64 {
        return;
    }
    let mut ek: f64 = seg[lo..lo + w].iter().map(|v| v * v).sum();
    for k in lo..=hi {
        if k > lo {
            ek += seg[k + w - 1] * seg[k + w - 1] - seg[k - 1] * seg[k - 1];
        }
        let dot: f64 = head.iter().zip(&seg[k..k + w]).map(|(a, b)| a * b).sum();
        let denom = (e0 * ek.max(0.0)).sqrt();
        r[k] = if denom > 0.0 { dot / denom } else { 0.0 };
    }
}

fn candidates(r: &[f64], lag_min: usize, lag_max: usize, sr: f64, cfg: &PitchConfig) -> Vec<Candidate> {
    let mut peaks: Vec<(f64, f64)> = Vec::new();
    let mut r_max = 0.0f64;
    for k in lag_min..=lag_max {
        r_max = r_max.max(r[k]);
        if r[k] < cfg.voicing_threshold || r[k] < r[k - 1] || r[k] < r[k + 1] {
            continue;
        }
        // parabolic refinement around the integer peak
        let (a, b, c) = (r[k - 1], r[k], r[k + 1]);
        let denom = a - 2.0 * b + c;
        let delta = if denom < 0.0 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
        let lag = k as f64 + delta;
        let height = (b - 0.25 * (a - c) * delta).min(1.0);
        let f0 = (sr / lag).clamp(cfg.f0_min, cfg.f0_max);
        peaks.push((height, f0));
    }
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
    peaks.truncate(cfg.max_candidates);

    let lag_max = lag_max as f64;
    let mut out: Vec<Candidate> = peaks
        .into_iter()
        .map(|(h, f0)| Candidate {
            f0,
            cost: 1.0 - h * (1.0 - cfg.lag_weight * (sr / f0) / lag_max),
        })
        .collect();
    // voiced wins locally iff the best peak clears the threshold
    out.push(Candidate {
        f0: 0.0,
        cost: r_max + (1.0 - 2.0 * cfg.voicing_threshold),
    });
    out
}

fn transition(prev: &Candidate, next: &Candidate, cfg: &PitchConfig) -> f64 {
    match (prev.f0 > 0.0, next.f0 > 0.0) {
        (true, true) => cfg.octave_cost * (next.f0 / prev.f0).log2().abs(),
        (false, false) => 0.0,
        _ => cfg.voicing_change_cost,
    }
}

fn viterbi(lattice: &[Vec<Candidate>], cfg: &PitchConfig) -> F0Track {
    let n = lattice.len();
    if n == 0 {
        return F0Track {
            f0: Vec::new(),
            voiced: Vec::new(),
        };
    }
    let mut cost: Vec<f64> = lattice[0].iter().map(|c| c.cost).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(n);
    back.push(vec![0; lattice[0].len()]);
    for t in 1..n {
        let mut next_cost = Vec::with_capacity(lattice[t].len());
        let mut bp = Vec::with_capacity(lattice[t].len());
        for cand in &lattice[t] {
            let mut best = (f64::INFINITY, 0);
            for (j, prev) in lattice[t - 1].iter().enumerate() {
                let c = cost[j] + transition(prev, cand, cfg);
                if c < best.0 {
                    best = (c, j);
                }
            }
            next_cost.push(best.0 + cand.cost);
            bp.push(best.1);
        }
        cost = next_cost;
        back.push(bp);
    }
    let mut idx = 0;
    for (j, &c) in cost.iter().enumerate() {
        if c < cost[idx] {
            idx = j;
        }
    }
    let mut f0 = vec![0.0; n];
    for t in (0..n).rev() {
        f0[t] = lattice[t][idx].f0;
        idx = back[t][idx];
    }
    let voiced = f0.iter().map(|&f| f > 0.0).collect();
    F0Track { f0, voiced }
}

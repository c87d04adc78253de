use crate::corpus::AudioRecording;
use crate::error::{Error, Result};

/// Low-pass cutoff as a fraction of the target rate.
const CUTOFF_RATIO: f64 = 0.45;
/// Kernel half-width, in zero crossings of the cutoff sinc.
const ZERO_CROSSINGS: f64 = 32.0;
const KAISER_BETA: f64 = 8.0;

/// Downsample with a Kaiser-windowed sinc kernel (cutoff `0.45 × target`).
///
/// Kernels are tabulated once per output phase (the ratio reduced by its
/// gcd), so any pair of integer rates works. Output length is
/// `round(n × target / source)`. Equal rates return a copy.
pub fn resample(rec: &AudioRecording, target: u32) -> Result<AudioRecording> {
    let src = rec.sample_rate;
    if target == 0 {
        return Err(Error::InvalidParameter("target sample rate 0".into()));
    }
    if target > src {
        return Err(Error::Upsampling { from: src, to: target });
    }
    if target == src {
        return Ok(rec.clone());
    }
    let x = &rec.samples;
    let n = x.len();
    let out_len = (n as f64 * target as f64 / src as f64).round() as usize;

    let fs = src as f64;
    let fc = CUTOFF_RATIO * target as f64;
    // twice the cutoff in cycles per input sample
    let bw = 2.0 * fc / fs;
    let half_width = ZERO_CROSSINGS / bw;
    let i0_beta = bessel_i0(KAISER_BETA);

    // output instants repeat their fractional offset every `phases` samples
    let g = gcd(src as u64, target as u64);
    let phases = (target as u64 / g) as usize;
    let stride = (src as u64 / g) as usize;
    let kernels: Vec<(isize, Vec<f64>)> = (0..phases)
        .map(|p| {
            let frac = ((p as u64 * src as u64) % target as u64) as f64 / target as f64;
            let first = (frac - half_width).ceil() as isize;
            let last = (frac + half_width).floor() as isize;
            let taps = (first..=last)
                .map(|r| {
                    let d = frac - r as f64;
                    let q = d / half_width;
                    let win = bessel_i0(KAISER_BETA * (1.0 - q * q).max(0.0).sqrt()) / i0_beta;
                    bw * sinc(bw * d) * win
                })
                .collect();
            (first, taps)
        })
        .collect();

    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len {
        let (q, p) = (m / phases, m % phases);
        let base = (q * stride) as isize + ((p as u64 * src as u64) / target as u64) as isize;
        let (first, taps) = &kernels[p];
        let start = base + first;
        let mut acc = 0.0;
        for (t, &h) in taps.iter().enumerate() {
            let j = start + t as isize;
            if j >= 0 && (j as usize) < n {
                acc += x[j as usize] * h;
            }
        }
        out.push(acc);
    }
    Ok(rec.with_samples(out, target))
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

//! Pseudo-speech corpus with controllable per-dialect prosody.
//!
//! Each syllable is a pulse train through two formant resonators and a
//! one-pole tilt filter, shaped by a raised-cosine amplitude envelope. Words
//! stress their first syllable; phrases decline in pitch and are separated by
//! pauses.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{build_manifest, format_annotations, write_wav, CorpusManifest, Tier, UnitSegment, METADATA_FILE};
use crate::error::{Error, Result};
use crate::seed;

/// Prosodic parameters of one synthetic dialect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialectParams {
    pub name: String,
    /// Hz.
    pub f0_base: f64,
    /// Accent excursion in semitones.
    pub f0_range: f64,
    /// Attenuation of unstressed syllables, in [0, 1).
    pub energy_depth: f64,
    /// Extra low-pass pole on stressed syllables.
    pub tilt_offset: f64,
    /// Syllables per second.
    pub syllable_rate: f64,
}

impl DialectParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("dialect {:?}: {what}", self.name)));
        if self.name.trim().is_empty() || self.name.contains(['\t', '\n', '/', '\\']) {
            return bad("name must be non-empty and free of tabs and path separators");
        }
        if !(60.0..=300.0).contains(&self.f0_base) {
            return bad("f0_base must lie in [60, 300] Hz");
        }
        if !(0.0..=12.0).contains(&self.f0_range) {
            return bad("f0_range must lie in [0, 12] semitones");
        }
        if !(0.0..0.95).contains(&self.energy_depth) {
            return bad("energy_depth must lie in [0, 0.95)");
        }
        if !(0.0..=0.6).contains(&self.tilt_offset) {
            return bad("tilt_offset must lie in [0, 0.6]");
        }
        if !(1.0..=10.0).contains(&self.syllable_rate) {
            return bad("syllable_rate must lie in [1, 10] per second");
        }
        Ok(())
    }
}

/// Spread of the per-speaker draws around the dialect row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeakerJitter {
    /// Standard deviation of the base F0 shift, semitones.
    pub f0_semitones: f64,
    /// Relative standard deviations.
    pub range_frac: f64,
    pub rate_frac: f64,
    /// Absolute standard deviations.
    pub depth: f64,
    pub tilt: f64,
}

impl Default for SpeakerJitter {
    fn default() -> Self {
        Self {
            f0_semitones: 1.5,
            range_frac: 0.1,
            rate_frac: 0.08,
            depth: 0.05,
            tilt: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub dialects: Vec<DialectParams>,
    pub speakers_per_dialect: usize,
    pub recordings_per_speaker: usize,
    /// Approximate length of each recording in seconds.
    pub recording_secs: f64,
    pub sample_rate: u32,
    /// Stationary white noise level relative to the speech RMS.
    pub snr_db: f64,
    pub jitter: SpeakerJitter,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dialects: default_dialects(),
            speakers_per_dialect: 4,
            recordings_per_speaker: 3,
            recording_secs: 8.0,
            sample_rate: 16_000,
            snr_db: 30.0,
            jitter: SpeakerJitter::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dialects.len() < 2 {
            return Err(Error::InvalidParameter("need at least two dialect rows".into()));
        }
        let mut names = BTreeSet::new();
        for d in &self.dialects {
            d.validate()?;
            if !names.insert(d.name.as_str()) {
                return Err(Error::InvalidParameter(format!("duplicate dialect {:?}", d.name)));
            }
        }
        if self.speakers_per_dialect == 0 || self.recordings_per_speaker == 0 {
            return Err(Error::InvalidParameter("speaker and recording counts must be positive".into()));
        }
        if !(2.0..=120.0).contains(&self.recording_secs) {
            return Err(Error::InvalidParameter("recording_secs must lie in [2, 120]".into()));
        }
        if !(8_000..=48_000).contains(&self.sample_rate) {
            return Err(Error::InvalidParameter("sample_rate must lie in [8000, 48000] Hz".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::InvalidParameter("snr_db must be finite".into()));
        }
        let j = &self.jitter;
        if [j.f0_semitones, j.range_frac, j.rate_frac, j.depth, j.tilt].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter("jitter values must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Five dialects 4 semitones apart in base F0 whose range, stress depth,
/// tilt and tempo are all distinct.
pub fn default_dialects() -> Vec<DialectParams> {
    let rows = [
        ("d1", 100.0, 2.0, 0.6, 0.4, 4.0),
        ("d2", 126.0, 8.0, 0.2, 0.1, 5.0),
        ("d3", 159.0, 5.0, 0.4, 0.0, 3.0),
        ("d4", 201.0, 3.0, 0.1, 0.3, 6.0),
        ("d5", 254.0, 6.0, 0.7, 0.2, 3.5),
    ];
    rows.iter()
        .map(|&(name, f0_base, f0_range, energy_depth, tilt_offset, syllable_rate)| DialectParams {
            name: name.to_string(),
            f0_base,
            f0_range,
            energy_depth,
            tilt_offset,
            syllable_rate,
        })
        .collect()
}

/// Five dialect names sharing one parameter row.
pub fn null_dialects() -> Vec<DialectParams> {
    (1..=5)
        .map(|i| DialectParams {
            name: format!("d{i}"),
            f0_base: 150.0,
            f0_range: 5.0,
            energy_depth: 0.4,
            tilt_offset: 0.2,
            syllable_rate: 4.3,
        })
        .collect()
}

const VOWELS: [(f64, f64); 5] = [(700.0, 1200.0), (300.0, 2300.0), (500.0, 1800.0), (400.0, 900.0), (600.0, 1500.0)];
const TILT_BASE: f64 = 0.3;

/// Second-order resonator with unity gain at DC.
struct Resonator {
    a: f64,
    b: f64,
    c: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new() -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn tune(&mut self, freq: f64, bandwidth: f64, sr: f64) {
        let r = (-PI * bandwidth / sr).exp();
        self.c = -r * r;
        self.b = 2.0 * r * (2.0 * PI * freq / sr).cos();
        self.a = 1.0 - self.b - self.c;
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.a * x + self.b * self.y1 + self.c * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// One speaker's realized parameters.
#[derive(Debug, Clone)]
struct Voice {
    f0_base: f64,
    f0_range: f64,
    depth: f64,
    tilt: f64,
    rate: f64,
}

fn draw_voice(d: &DialectParams, j: &SpeakerJitter, rng: &mut ChaCha8Rng) -> Voice {
    let mut n = || Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
    Voice {
        f0_base: d.f0_base * 2f64.powf(j.f0_semitones * n() / 12.0),
        f0_range: (d.f0_range * (1.0 + j.range_frac * n())).max(0.0),
        depth: (d.energy_depth + j.depth * n()).clamp(0.0, 0.95),
        tilt: (d.tilt_offset + j.tilt * n()).clamp(0.0, 0.6),
        rate: d.syllable_rate * (1.0 + j.rate_frac * n()).max(0.5),
    }
}

struct Rendered {
    samples: Vec<f64>,
    units: Vec<UnitSegment>,
}

fn render(voice: &Voice, cfg: &SynthConfig, id: &str, rng: &mut ChaCha8Rng) -> Rendered {
    let sr = cfg.sample_rate as f64;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out: Vec<f64> = Vec::new();
    let mut units = Vec::new();
    let silence = |out: &mut Vec<f64>, secs: f64| out.resize(out.len() + (secs * sr).round() as usize, 0.0);

    let (mut f1, mut f2) = (Resonator::new(), Resonator::new());
    let mut tilt_state = 0.0;
    let mut phase = 0.0;
    let mut word_no = 0;
    silence(&mut out, 0.4);
    while (out.len() as f64) / sr < cfg.recording_secs - 1.5 {
        let n_words = rng.gen_range(3..=6);
        for w in 0..n_words {
            let word_start = out.len() as f64 / sr;
            let n_syl = rng.gen_range(1..=3);
            for s in 0..n_syl {
                let stressed = s == 0;
                let pos = (w as f64 + s as f64 / n_syl as f64) / n_words as f64;
                let mut dur = rng.gen_range(0.8..1.2) / voice.rate;
                if stressed {
                    dur *= 1.2;
                }
                let target = voice.f0_range * (if stressed { 0.5 } else { -0.25 }) - 0.3 * voice.f0_range * pos + 0.3 * unit.sample(rng);
                let (st0, st1) = if stressed {
                    (target - 0.3 * voice.f0_range, target)
                } else {
                    (target, target - 0.1 * voice.f0_range)
                };
                let amp = if stressed { 1.0 } else { 1.0 - voice.depth };
                let pole = (TILT_BASE + if stressed { voice.tilt } else { 0.0 }).min(0.95);
                let (v1, v2) = VOWELS[rng.gen_range(0..VOWELS.len())];
                f1.tune(v1, 80.0, sr);
                f2.tune(v2, 120.0, sr);
                let n = (dur * sr).round() as usize;
                for i in 0..n {
                    let x = i as f64 / n as f64;
                    let f0 = voice.f0_base * 2f64.powf((st0 + (st1 - st0) * x) / 12.0);
                    phase += f0 / sr;
                    let mut e = 0.02 * unit.sample(rng);
                    if phase >= 1.0 {
                        phase -= 1.0;
                        e += 1.0;
                    }
                    let y = f2.step(f1.step(e));
                    tilt_state = (1.0 - pole) * y + pole * tilt_state;
                    let env = 0.5 - 0.5 * (2.0 * PI * x).cos();
                    out.push(amp * env * tilt_state);
                }
            }
            word_no += 1;
            units.push(UnitSegment {
                start: word_start,
                end: out.len() as f64 / sr,
                tier: Tier::Word,
                text: Some(format!("w{word_no}")),
                recording_id: id.to_string(),
            });
        }
        let pause_start = out.len() as f64 / sr;
        silence(&mut out, rng.gen_range(0.25..0.45));
        units.push(UnitSegment {
            start: pause_start,
            end: out.len() as f64 / sr,
            tier: Tier::Word,
            text: Some("<p>".into()),
            recording_id: id.to_string(),
        });
    }
    silence(&mut out, 0.3);

    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    let active: Vec<f64> = out.iter().copied().filter(|v| v.abs() > 1e-4).collect();
    let rms = (active.iter().map(|v| v * v).sum::<f64>() / active.len().max(1) as f64).sqrt();
    let noise = rms * 10f64.powf(-cfg.snr_db / 20.0);
    for v in out.iter_mut() {
        *v += noise * unit.sample(rng);
    }
    Rendered { samples: out, units }
}

/// Write `<id>.wav`, `<id>.tsv` and the speaker metadata to `dir` and return
/// the manifest of the new corpus. The output is a pure function of
/// `(cfg, seed)`.
pub fn generate_synthetic_corpus(dir: impl AsRef<Path>, cfg: &SynthConfig, seed: u64) -> Result<CorpusManifest> {
    cfg.validate()?;
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut jobs = Vec::new();
    for (di, d) in cfg.dialects.iter().enumerate() {
        for s in 0..cfg.speakers_per_dialect {
            let speaker_no = (di * cfg.speakers_per_dialect + s) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, speaker_no));
            let voice = draw_voice(d, &cfg.jitter, &mut rng);
            for r in 0..cfg.recordings_per_speaker {
                let speaker = format!("{}_s{s}", d.name);
                let id = format!("{speaker}_r{r}");
                let rec_seed = seed::derive(seed::derive(seed, speaker_no), r as u64 + 1);
                jobs.push((d.name.clone(), speaker, id, voice.clone(), rec_seed));
            }
        }
    }

    let written = crate::par::map(&jobs, |(_, _, id, voice, rec_seed)| -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(*rec_seed);
        let r = render(voice, cfg, id, &mut rng);
        write_wav(dir.join(format!("{id}.wav")), &r.samples, cfg.sample_rate)?;
        let path = dir.join(format!("{id}.tsv"));
        std::fs::write(&path, format_annotations(&r.units)).map_err(|e| Error::io(&path, e))
    });
    written.into_iter().collect::<Result<Vec<()>>>()?;

    let mut meta = String::from("# speaker\tdialect\trecording\n");
    for (dialect, speaker, id, _, _) in &jobs {
        let _ = writeln!(meta, "{speaker}\t{dialect}\t{id}");
    }
    let path = dir.join(METADATA_FILE);
    std::fs::write(&path, meta).map_err(|e| Error::io(&path, e))?;
    build_manifest(dir)
}

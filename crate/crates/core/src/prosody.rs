//! Per-speaker normalization, unit descriptors and context stacking.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::UnitSegment;
use crate::dsp::{ProsodicTrack, LOG_FLOOR};
use crate::error::{Error, Result};

/// Below this the tilt standard deviation is treated as zero and z-scored
/// tilt is reported as 0.
pub const TILT_STD_FLOOR: f64 = 1e-10;

pub const DESCRIPTORS: [&str; 5] = ["mean", "std", "min", "max", "range"];

/// Length of a vector holding every feature.
pub const FULL_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Feature {
    En,
    F0,
    St,
    Dur,
}

impl Feature {
    pub const ALL: [Feature; 4] = [Feature::En, Feature::F0, Feature::St, Feature::Dur];

    pub fn as_str(self) -> &'static str {
        match self {
            Feature::En => "EN",
            Feature::F0 => "F0",
            Feature::St => "ST",
            Feature::Dur => "DUR",
        }
    }

    /// Columns occupied in the full 16-value vector.
    fn columns(self) -> std::ops::Range<usize> {
        match self {
            Feature::En => 0..5,
            Feature::F0 => 5..10,
            Feature::St => 10..15,
            Feature::Dur => 15..16,
        }
    }
}

/// Non-empty subset of {EN, F0, ST, DUR} stored as a bitset in layout order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FeatureCombo(u8);

impl FeatureCombo {
    pub fn new(features: &[Feature]) -> Result<Self> {
        let bits = features.iter().fold(0u8, |b, f| b | (1 << *f as u8));
        Self::from_bits(bits)
    }

    pub fn from_bits(bits: u8) -> Result<Self> {
        if bits == 0 || bits > 15 {
            return Err(Error::InvalidParameter(format!("feature combination bits {bits}")));
        }
        Ok(Self(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    /// All 15 combinations, ordered by bit pattern.
    pub fn all() -> Vec<FeatureCombo> {
        (1..16).map(FeatureCombo).collect()
    }

    pub fn full() -> Self {
        Self(15)
    }

    pub fn contains(self, f: Feature) -> bool {
        self.0 & (1 << f as u8) != 0
    }

    pub fn features(self) -> Vec<Feature> {
        Feature::ALL.into_iter().filter(|f| self.contains(*f)).collect()
    }

    pub fn dim(self) -> usize {
        self.features().iter().map(|f| f.columns().len()).sum()
    }

    /// `feature:descriptor` names in vector order.
    pub fn layout(self) -> Vec<String> {
        let mut out = Vec::new();
        for f in self.features() {
            if f == Feature::Dur {
                out.push("DUR:log".to_string());
            } else {
                out.extend(DESCRIPTORS.iter().map(|d| format!("{}:{d}", f.as_str())));
            }
        }
        out
    }

    /// Pick this combination's columns out of a full 16-value vector.
    pub fn select(self, full: &[f64]) -> Vec<f64> {
        self.features().into_iter().flat_map(|f| full[f.columns()].iter().copied()).collect()
    }
}

impl fmt::Display for FeatureCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.features().iter().map(|x| x.as_str()).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for FeatureCombo {
    type Err = Error;

    /// Accepts `EN,F0,ST` or `EN+F0+ST`, case-insensitive.
    fn from_str(s: &str) -> Result<Self> {
        let mut feats = Vec::new();
        for part in s.split([',', '+']).map(str::trim).filter(|p| !p.is_empty()) {
            let f = match part.to_ascii_uppercase().as_str() {
                "EN" => Feature::En,
                "F0" => Feature::F0,
                "ST" => Feature::St,
                "DUR" => Feature::Dur,
                _ => return Err(Error::InvalidParameter(format!("unknown feature {part:?} in {s:?}"))),
            };
            feats.push(f);
        }
        Self::new(&feats)
    }
}

impl TryFrom<String> for FeatureCombo {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FeatureCombo> for String {
    fn from(c: FeatureCombo) -> String {
        c.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerStats {
    pub speaker_id: String,
    /// Hz.
    pub f0_median: f64,
    pub tilt_mean: f64,
    pub tilt_std: f64,
}

/// Pooled voiced-F0 median (mean of the middle pair for even counts) and
/// population tilt statistics over all of a speaker's frames.
pub fn speaker_stats(speaker_id: &str, tracks: &[&ProsodicTrack]) -> Result<SpeakerStats> {
    let mut f0: Vec<f64> = tracks
        .iter()
        .flat_map(|t| t.f0.iter().zip(&t.voiced).filter(|(_, v)| **v).map(|(f, _)| *f))
        .collect();
    if f0.is_empty() {
        return Err(Error::NoVoicedFrames(speaker_id.to_string()));
    }
    f0.sort_by(f64::total_cmp);
    let m = f0.len();
    let f0_median = if m % 2 == 1 { f0[m / 2] } else { 0.5 * (f0[m / 2 - 1] + f0[m / 2]) };

    let tilt: Vec<f64> = tracks.iter().flat_map(|t| t.tilt.iter().copied()).collect();
    let (tilt_mean, tilt_std) = mean_std(&tilt);
    Ok(SpeakerStats {
        speaker_id: speaker_id.to_string(),
        f0_median,
        tilt_mean,
        tilt_std,
    })
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (0.0, 0.0);
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Semitones relative to the speaker median: `12·log2(f0 / median)`.
pub fn normalize_f0(f0: f64, stats: &SpeakerStats) -> Result<f64> {
    if !(f0 > 0.0 && f0.is_finite()) {
        return Err(Error::Unvoiced(f0));
    }
    Ok(12.0 * (f0 / stats.f0_median).log2())
}

/// Frame tracks after per-speaker normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedTrack {
    pub recording_id: String,
    pub frame_times: Vec<f64>,
    /// `ln(EN + 1e-10)`.
    pub energy: Vec<f64>,
    /// Semitones; `None` on unvoiced frames.
    pub f0: Vec<Option<f64>>,
    /// z-scored C1.
    pub tilt: Vec<f64>,
}

pub fn normalize_tracks(track: &ProsodicTrack, stats: &SpeakerStats) -> NormalizedTrack {
    let energy = track.energy.iter().map(|e| (e + LOG_FLOOR).ln()).collect();
    let f0 = track
        .f0
        .iter()
        .zip(&track.voiced)
        .map(|(&f, &v)| if v { normalize_f0(f, stats).ok() } else { None })
        .collect();
    let tilt = track
        .tilt
        .iter()
        .map(|c| {
            if stats.tilt_std > TILT_STD_FLOOR {
                (c - stats.tilt_mean) / stats.tilt_std
            } else {
                0.0
            }
        })
        .collect();
    NormalizedTrack {
        recording_id: track.recording_id.clone(),
        frame_times: track.frame_times.clone(),
        energy,
        f0,
        tilt,
    }
}

/// Every descriptor of one unit, before combination selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitFeatures {
    pub unit: UnitSegment,
    /// EN ×5, F0 ×5, ST ×5, DUR.
    pub values: Vec<f64>,
    /// No voiced frame inside the unit; the F0 block is zeros.
    pub f0_missing: bool,
}

fn push_stats(out: &mut Vec<f64>, x: &[f64]) {
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // rounding can leave the mean a hair outside [min, max]; clamped, a
    // constant unit gets exactly its value and zero spread
    let mean = (x.iter().sum::<f64>() / x.len() as f64).clamp(min, max);
    let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
    out.extend([mean, std, min, max, max - min]);
}

/// Descriptors over the frames whose centres lie in `[start, end)`.
pub fn full_descriptors(track: &NormalizedTrack, unit: &UnitSegment) -> Result<UnitFeatures> {
    let lo = track.frame_times.partition_point(|&t| t < unit.start);
    let hi = track.frame_times.partition_point(|&t| t < unit.end);
    if hi <= lo {
        return Err(Error::EmptyUnit {
            recording: track.recording_id.clone(),
            start: unit.start,
            end: unit.end,
        });
    }
    let mut values = Vec::with_capacity(FULL_DIM);
    push_stats(&mut values, &track.energy[lo..hi]);
    let voiced: Vec<f64> = track.f0[lo..hi].iter().flatten().copied().collect();
    let f0_missing = voiced.is_empty();
    if f0_missing {
        values.extend([0.0; 5]);
    } else {
        push_stats(&mut values, &voiced);
    }
    push_stats(&mut values, &track.tilt[lo..hi]);
    values.push((unit.end - unit.start).max(LOG_FLOOR).ln());
    Ok(UnitFeatures {
        unit: unit.clone(),
        values,
        f0_missing,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorVector {
    pub unit: UnitSegment,
    pub values: Vec<f64>,
    pub layout: Arc<Vec<String>>,
    /// Class index.
    pub dialect: usize,
    pub f0_missing: bool,
}

impl UnitFeatures {
    pub fn to_vector(&self, combo: FeatureCombo, layout: &Arc<Vec<String>>, dialect: usize) -> DescriptorVector {
        DescriptorVector {
            unit: self.unit.clone(),
            values: combo.select(&self.values),
            layout: Arc::clone(layout),
            dialect,
            f0_missing: self.f0_missing && combo.contains(Feature::F0),
        }
    }
}

pub fn unit_descriptors(
    track: &NormalizedTrack,
    unit: &UnitSegment,
    combo: FeatureCombo,
    dialect: usize,
) -> Result<DescriptorVector> {
    let full = full_descriptors(track, unit)?;
    Ok(full.to_vector(combo, &Arc::new(combo.layout()), dialect))
}

/// Concatenate `[v(i-w) .. v(i+w)]` per position, zero blocks past either end.
pub fn stack_values(vectors: &[Vec<f64>], width: usize) -> Vec<Vec<f64>> {
    let dim = vectors.first().map_or(0, Vec::len);
    let n = vectors.len() as isize;
    (0..n)
        .map(|i| {
            let mut out = Vec::with_capacity((2 * width + 1) * dim);
            for j in i - width as isize..=i + width as isize {
                if (0..n).contains(&j) {
                    out.extend_from_slice(&vectors[j as usize]);
                } else {
                    out.extend(std::iter::repeat_n(0.0, dim));
                }
            }
            out
        })
        .collect()
}

/// Context stacking for the units of one recording, in unit order.
pub fn stack_context(vectors: &[DescriptorVector], width: usize) -> Vec<DescriptorVector> {
    let Some(first) = vectors.first() else {
        return Vec::new();
    };
    let mut layout = Vec::with_capacity((2 * width + 1) * first.layout.len());
    for off in -(width as isize)..=width as isize {
        layout.extend(first.layout.iter().map(|name| format!("{name}@{off:+}")));
    }
    let layout = Arc::new(layout);
    let raw: Vec<Vec<f64>> = vectors.iter().map(|v| v.values.clone()).collect();
    stack_values(&raw, width)
        .into_iter()
        .zip(vectors)
        .map(|(values, v)| DescriptorVector {
            unit: v.unit.clone(),
            values,
            layout: Arc::clone(&layout),
            dialect: v.dialect,
            f0_missing: v.f0_missing,
        })
        .collect()
}

/// One row per unit: `recording_id,unit_index,start,end,dialect,<layout...>`.
/// Units are indexed within their recording.
pub fn feature_matrix_csv(vectors: &[DescriptorVector], dialects: &[String]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["recording_id".to_string(), "unit_index".into(), "start".into(), "end".into(), "dialect".into()];
    if let Some(v) = vectors.first() {
        header.extend(v.layout.iter().cloned());
    }
    w.write_record(&header)?;
    let mut index = 0usize;
    let mut prev: Option<&str> = None;
    for v in vectors {
        if prev != Some(v.unit.recording_id.as_str()) {
            index = 0;
            prev = Some(&v.unit.recording_id);
        }
        let dialect = dialects.get(v.dialect).cloned().unwrap_or_else(|| v.dialect.to_string());
        let mut row = vec![
            v.unit.recording_id.clone(),
            index.to_string(),
            v.unit.start.to_string(),
            v.unit.end.to_string(),
            dialect,
        ];
        row.extend(v.values.iter().map(f64::to_string));
        w.write_record(&row)?;
        index += 1;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Tier;
    use proptest::prelude::*;

    fn stats(median: f64) -> SpeakerStats {
        SpeakerStats {
            speaker_id: "s".into(),
            f0_median: median,
            tilt_mean: 0.0,
            tilt_std: 1.0,
        }
    }

    fn track(f0: &[f64], tilt: &[f64]) -> ProsodicTrack {
        let n = f0.len();
        ProsodicTrack {
            recording_id: "r".into(),
            frame_times: (0..n).map(|i| i as f64 * 0.005).collect(),
            energy: vec![1.0; n],
            f0: f0.to_vec(),
            voiced: f0.iter().map(|&f| f > 0.0).collect(),
            tilt: tilt.to_vec(),
        }
    }

    fn unit(start: f64, end: f64) -> UnitSegment {
        UnitSegment {
            start,
            end,
            tier: Tier::Word,
            text: None,
            recording_id: "r".into(),
        }
    }

    #[test]
    fn medians() {
        let t = track(&[100.0, 0.0, 140.0, 120.0], &[0.0; 4]);
        assert_eq!(speaker_stats("s", &[&t]).unwrap().f0_median, 120.0);
        let t = track(&[200.0, 100.0], &[0.0; 2]);
        assert_eq!(speaker_stats("s", &[&t]).unwrap().f0_median, 150.0);
        // pooled across recordings
        let (a, b) = (track(&[100.0], &[0.0]), track(&[300.0, 200.0], &[0.0, 0.0]));
        assert_eq!(speaker_stats("s", &[&a, &b]).unwrap().f0_median, 200.0);
        let silent = track(&[0.0, 0.0], &[0.0, 0.0]);
        assert!(matches!(speaker_stats("s", &[&silent]), Err(Error::NoVoicedFrames(_))));
    }

    #[test]
    fn semitone_identities() {
        let s = stats(440.0);
        assert_eq!(normalize_f0(440.0, &s).unwrap(), 0.0);
        assert!((normalize_f0(880.0, &s).unwrap() - 12.0).abs() < 1e-12);
        assert!((normalize_f0(220.0, &s).unwrap() + 12.0).abs() < 1e-12);
        assert!(normalize_f0(0.0, &s).is_err());
    }

    #[test]
    fn normalized_track_values() {
        let raw = track(&[100.0, 0.0, 200.0], &[1.0, 2.0, 3.0]);
        let mut raw0 = raw.clone();
        raw0.energy[0] = 0.0;
        let st = speaker_stats("s", &[&raw0]).unwrap();
        let n = normalize_tracks(&raw0, &st);
        assert_eq!(n.energy[0], LOG_FLOOR.ln());
        assert_eq!(n.f0[1], None);
        assert_eq!(n.tilt[1], 0.0);
        let (m, s) = mean_std(&n.tilt);
        assert!(m.abs() < 1e-9 && (s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_tilt_maps_to_zero() {
        let raw = track(&[100.0, 100.0], &[0.7, 0.7]);
        let st = speaker_stats("s", &[&raw]).unwrap();
        assert_eq!(st.tilt_std, 0.0);
        assert!(normalize_tracks(&raw, &st).tilt.iter().all(|&z| z == 0.0));
    }

    fn norm(energy: &[f64], f0: &[Option<f64>]) -> NormalizedTrack {
        let n = energy.len();
        NormalizedTrack {
            recording_id: "r".into(),
            frame_times: (0..n).map(|i| i as f64 * 0.005).collect(),
            energy: energy.to_vec(),
            f0: f0.to_vec(),
            tilt: vec![0.0; n],
        }
    }

    #[test]
    fn two_point_stats() {
        let t = norm(&[1.0, 3.0], &[Some(1.0), Some(1.0)]);
        let d = unit_descriptors(&t, &unit(0.0, 0.01), FeatureCombo::new(&[Feature::En]).unwrap(), 0).unwrap();
        assert_eq!(d.values, vec![2.0, 1.0, 1.0, 3.0, 2.0]);
        let t = norm(&[0.4; 6], &[None; 6]);
        let d = unit_descriptors(&t, &unit(0.0, 0.03), FeatureCombo::new(&[Feature::En]).unwrap(), 0).unwrap();
        assert_eq!(d.values, vec![0.4, 0.0, 0.4, 0.4, 0.0]);
    }

    #[test]
    fn full_combo_has_sixteen_values() {
        let t = norm(&[1.0, 2.0, 3.0], &[Some(0.5), None, Some(-0.5)]);
        let d = unit_descriptors(&t, &unit(0.0, 0.015), FeatureCombo::full(), 2).unwrap();
        assert_eq!(d.values.len(), 16);
        assert_eq!(d.layout.len(), 16);
        assert_eq!(d.layout[0], "EN:mean");
        assert_eq!(d.layout[5], "F0:mean");
        assert_eq!(d.layout[15], "DUR:log");
        assert!((d.values[15] - 0.015f64.ln()).abs() < 1e-12);
        // F0 block from the two voiced frames only
        assert_eq!(&d.values[5..10], &[0.0, 0.5, -0.5, 0.5, 1.0]);
        assert!(!d.f0_missing);
    }

    #[test]
    fn unvoiced_unit_flags_missing_f0() {
        let t = norm(&[1.0, 2.0], &[None, None]);
        let d = unit_descriptors(&t, &unit(0.0, 0.01), FeatureCombo::full(), 0).unwrap();
        assert!(d.f0_missing);
        assert_eq!(&d.values[5..10], &[0.0; 5]);
        let e = unit_descriptors(&t, &unit(0.0, 0.01), "EN".parse().unwrap(), 0).unwrap();
        assert!(!e.f0_missing);
    }

    #[test]
    fn unit_between_frames_is_an_error() {
        let t = norm(&[1.0, 2.0], &[None, None]);
        assert!(matches!(
            unit_descriptors(&t, &unit(0.001, 0.004), FeatureCombo::full(), 0),
            Err(Error::EmptyUnit { .. })
        ));
    }

    #[test]
    fn combos() {
        let all = FeatureCombo::all();
        assert_eq!(all.len(), 15);
        let c: FeatureCombo = "en,f0+ST".parse().unwrap();
        assert_eq!(c.to_string(), "EN+F0+ST");
        assert_eq!(c.dim(), 15);
        assert_eq!("DUR".parse::<FeatureCombo>().unwrap().dim(), 1);
        assert!("".parse::<FeatureCombo>().is_err());
        assert!("EN,XX".parse::<FeatureCombo>().is_err());
        for c in all {
            assert_eq!(c.layout().len(), c.dim());
            assert_eq!(c.to_string().parse::<FeatureCombo>().unwrap(), c);
        }
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(json, "\"EN+F0+ST\"");
    }

    #[test]
    fn stacking_edges() {
        let v: Vec<Vec<f64>> = (1..=6).map(|i| vec![i as f64, -(i as f64)]).collect();
        let s = stack_values(&v, 2);
        assert_eq!(s[2], vec![1.0, -1.0, 2.0, -2.0, 3.0, -3.0, 4.0, -4.0, 5.0, -5.0]);
        assert_eq!(&s[0][..4], &[0.0; 4]);
        assert_eq!(&s[0][4..6], &[1.0, -1.0]);
        let one = stack_values(&v[..1], 2);
        assert_eq!(one[0], vec![0.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn csv_export() {
        let t = norm(&[1.0, 3.0, 5.0], &[None, None, None]);
        let mut units = vec![unit(0.0, 0.01), unit(0.01, 0.015)];
        let mut vs: Vec<DescriptorVector> = units
            .iter()
            .map(|u| unit_descriptors(&t, u, "EN,DUR".parse().unwrap(), 1).unwrap())
            .collect();
        units[0].recording_id = "q".into();
        vs[0].unit.recording_id = "q".into();
        let csv = feature_matrix_csv(&vs, &["a".into(), "b".into()]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "recording_id,unit_index,start,end,dialect,EN:mean,EN:std,EN:min,EN:max,EN:range,DUR:log"
        );
        assert!(lines[1].starts_with("q,0,0,0.01,b,2,1,1,3,2,"));
        assert!(lines[2].starts_with("r,0,0.01,0.015,b,5,0,5,5,0,"));
    }

    fn random_track() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (5usize..60).prop_flat_map(|n| {
            (
                prop::collection::vec(1e-4f64..10.0, n),
                prop::collection::vec(prop_oneof![Just(0.0), 60.0f64..400.0], n),
                prop::collection::vec(-20.0f64..20.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn semitones_are_monotone(a in 1.0f64..1000.0, b in 1.0f64..1000.0, m in 50.0f64..300.0) {
            prop_assume!(a != b);
            let s = stats(m);
            let (x, y) = (normalize_f0(a, &s).unwrap(), normalize_f0(b, &s).unwrap());
            prop_assert_eq!(a < b, x < y);
        }

        #[test]
        fn descriptor_ordering((energy, f0, tilt) in random_track(), a in 0.0f64..0.1, len in 0.005f64..0.3) {
            let mut raw = track(&f0, &tilt);
            raw.energy = energy;
            raw.f0[0] = 150.0;
            raw.voiced[0] = true;
            let st = speaker_stats("s", &[&raw]).unwrap();
            let n = normalize_tracks(&raw, &st);
            if let Ok(d) = unit_descriptors(&n, &unit(a, a + len), FeatureCombo::full(), 0) {
                for block in [0usize, 5, 10] {
                    if block == 5 && d.f0_missing { continue; }
                    let v = &d.values[block..block + 5];
                    prop_assert!(v[3] >= v[0] && v[0] >= v[2]);
                    prop_assert!((v[4] - (v[3] - v[2])).abs() <= 1e-9);
                    prop_assert!(v[1] >= 0.0);
                }
            }
        }

        #[test]
        fn f0_scale_cancels((energy, f0, tilt) in random_track(), c in 0.25f64..4.0) {
            let mut raw = track(&f0, &tilt);
            raw.energy = energy;
            raw.f0[0] = 150.0;
            raw.voiced[0] = true;
            let mut scaled = raw.clone();
            scaled.f0.iter_mut().for_each(|f| *f *= c);
            let (sa, sb) = (speaker_stats("s", &[&raw]).unwrap(), speaker_stats("s", &[&scaled]).unwrap());
            let (na, nb) = (normalize_tracks(&raw, &sa), normalize_tracks(&scaled, &sb));
            let u = unit(0.0, 1.0);
            let (da, db) = (
                unit_descriptors(&na, &u, "F0".parse().unwrap(), 0).unwrap(),
                unit_descriptors(&nb, &u, "F0".parse().unwrap(), 0).unwrap(),
            );
            for (x, y) in da.values.iter().zip(&db.values) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }

        #[test]
        fn stacked_centre_is_exact(n in 1usize..12, dim in 1usize..6, width in 0usize..4) {
            let v: Vec<Vec<f64>> = (0..n).map(|i| (0..dim).map(|j| (i * 31 + j) as f64 * 0.37).collect()).collect();
            let s = stack_values(&v, width);
            prop_assert_eq!(s.len(), n);
            for (i, row) in s.iter().enumerate() {
                prop_assert_eq!(row.len(), (2 * width + 1) * dim);
                prop_assert_eq!(&row[width * dim..(width + 1) * dim], v[i].as_slice());
            }
        }
    }
}

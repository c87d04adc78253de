//! Corpus-wide feature extraction with an on-disk cache.
//!
//! Stage one runs the front end and the syllabifier per recording and caches
//! the frame tracks with both unit tiers. Stage two normalizes per speaker,
//! computes unit descriptors and caches the whole corpus matrix. Cache files
//! are keyed by a digest of the configuration and the input bytes, and are
//! written to a temporary file that is then renamed into place, so concurrent
//! readers never see a partial entry.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{load_wav, parse_annotations, CorpusManifest, RecordingEntry, Tier, UnitSegment};
use crate::dsp::{analyze, preprocess, FrontEndConfig, ProsodicTrack};
use crate::error::{Error, Result};
use crate::par;
use crate::prosody::{full_descriptors, normalize_tracks, speaker_stats, UnitFeatures};
use crate::syllabifier::{syllabify, OscillatorConfig};

/// Environment variable that overrides the cache directory.
pub const CACHE_ENV: &str = "PROSODID_CACHE";

/// Everything that changes extracted features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractConfig {
    pub front_end: FrontEndConfig,
    pub oscillator: OscillatorConfig,
}

impl ExtractConfig {
    pub fn validate(&self) -> Result<()> {
        self.front_end.frame.validate()?;
        self.oscillator.validate()
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Frame tracks and unit tiers of one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingFeatures {
    pub recording_id: String,
    pub speaker_id: String,
    pub dialect: String,
    pub track: ProsodicTrack,
    /// Empty when the recording has no word annotations.
    pub words: Vec<UnitSegment>,
    pub syllables: Vec<UnitSegment>,
}

/// Unit descriptors of one recording after speaker normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingUnits {
    pub recording_id: String,
    pub speaker_id: String,
    /// Class index into [`CorpusFeatures::dialects`].
    pub dialect: usize,
    pub word: Vec<UnitFeatures>,
    pub syllable: Vec<UnitFeatures>,
}

impl RecordingUnits {
    pub fn tier(&self, tier: Tier) -> &[UnitFeatures] {
        match tier {
            Tier::Word => &self.word,
            Tier::Syllable => &self.syllable,
        }
    }
}

/// Descriptor matrices for a whole corpus, recordings in manifest order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusFeatures {
    pub key: String,
    pub dialects: Vec<String>,
    pub recordings: Vec<RecordingUnits>,
    /// Units dropped because they covered no analysis frame.
    pub skipped_units: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ExtractSummary {
    pub recordings: usize,
    pub cache_hits: usize,
    pub computed: usize,
    /// `(recording_id, error)` for every recording that could not be processed.
    pub failures: Vec<(String, String)>,
    pub skipped_units: usize,
    /// Present when every recording succeeded.
    pub corpus_key: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    dir: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl FeatureCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// `$PROSODID_CACHE` when set and non-empty, otherwise `default`.
    pub fn from_env_or(default: impl Into<PathBuf>) -> Self {
        match std::env::var_os(CACHE_ENV) {
            Some(v) if !v.is_empty() => Self::new(v),
            _ => Self::new(default),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn read<T: DeserializeOwned>(&self, name: &str) -> Result<Option<T>> {
        let path = self.dir.join(name);
        match std::fs::read(&path) {
            Ok(bytes) => match serde_json::from_slice(&bytes) {
                Ok(v) => Ok(Some(v)),
                Err(e) => {
                    log::warn!("ignoring unreadable cache entry {}: {e}", path.display());
                    Ok(None)
                }
            },
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    fn write<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.dir.join(name);
        let tmp = self.dir.join(format!(
            ".{name}.{}.{}.tmp",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::write(&tmp, serde_json::to_vec(value)?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| {
            let _ = std::fs::remove_file(&tmp);
            Error::io(&path, e)
        })
    }
}

fn recording_file(id: &str, key: &str) -> String {
    format!("rec-{id}-{}.json", &key[..16])
}

fn corpus_file(key: &str) -> String {
    format!("corpus-{}.json", &key[..16])
}

/// Digest of the config, the metadata and the bytes of every input file.
pub fn recording_key(manifest: &CorpusManifest, entry: &RecordingEntry, config: &ExtractConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(config.digest().as_bytes());
    for field in [&entry.recording_id, &entry.speaker_id, &entry.dialect] {
        h.update((field.len() as u64).to_le_bytes());
        h.update(field.as_bytes());
    }
    let wav = manifest.wav_path(entry);
    h.update(std::fs::read(&wav).map_err(|e| Error::io(&wav, e))?);
    if let Some(ann) = manifest.annotation_path(entry) {
        h.update(b"annotations");
        h.update(std::fs::read(&ann).map_err(|e| Error::io(&ann, e))?);
    }
    Ok(hex::encode(h.finalize()))
}

fn corpus_key(keys: &[String]) -> String {
    let mut h = Sha256::new();
    for k in keys {
        h.update(k.as_bytes());
    }
    hex::encode(h.finalize())
}

/// Front end plus syllabifier for one recording, uncached.
pub fn extract_recording(manifest: &CorpusManifest, entry: &RecordingEntry, config: &ExtractConfig) -> Result<RecordingFeatures> {
    let mut rec = load_wav(manifest.wav_path(entry))?;
    rec.recording_id = entry.recording_id.clone();
    rec.speaker_id = entry.speaker_id.clone();
    rec.dialect = entry.dialect.clone();
    let clean = preprocess(&rec, &config.front_end)?;
    let track = analyze(&clean, &config.front_end)?;
    let syllables = syllabify(&clean, &config.oscillator)?;
    let words = match manifest.annotation_path(entry) {
        Some(p) => parse_annotations(p, Tier::Word)?
            .into_iter()
            .map(|mut u| {
                u.recording_id = entry.recording_id.clone();
                u
            })
            .collect(),
        None => {
            log::warn!("{}: no word annotations", entry.recording_id);
            Vec::new()
        }
    };
    Ok(RecordingFeatures {
        recording_id: entry.recording_id.clone(),
        speaker_id: entry.speaker_id.clone(),
        dialect: entry.dialect.clone(),
        track,
        words,
        syllables,
    })
}

/// Normalize per speaker and describe every unit of both tiers.
///
/// Units that cover no analysis frame are skipped and counted.
pub fn describe_corpus(dialects: &[String], recordings: &[RecordingFeatures], key: String) -> Result<CorpusFeatures> {
    let mut by_speaker: BTreeMap<&str, Vec<&ProsodicTrack>> = BTreeMap::new();
    for r in recordings {
        by_speaker.entry(&r.speaker_id).or_default().push(&r.track);
    }
    let stats = by_speaker
        .iter()
        .map(|(s, tracks)| Ok((*s, speaker_stats(s, tracks)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;

    let mut skipped = 0;
    let mut out = Vec::with_capacity(recordings.len());
    for r in recordings {
        let dialect = dialects
            .iter()
            .position(|d| *d == r.dialect)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown dialect {:?}", r.dialect)))?;
        let norm = normalize_tracks(&r.track, &stats[r.speaker_id.as_str()]);
        let mut describe = |units: &[UnitSegment]| -> Result<Vec<UnitFeatures>> {
            let mut v = Vec::with_capacity(units.len());
            for u in units {
                match full_descriptors(&norm, u) {
                    Ok(f) => v.push(f),
                    Err(e @ Error::EmptyUnit { .. }) => {
                        log::debug!("skipping unit: {e}");
                        skipped += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(v)
        };
        let word = describe(&r.words)?;
        let syllable = describe(&r.syllables)?;
        out.push(RecordingUnits {
            recording_id: r.recording_id.clone(),
            speaker_id: r.speaker_id.clone(),
            dialect,
            word,
            syllable,
        });
    }
    if skipped > 0 {
        log::info!("{skipped} units covered no analysis frame and were skipped");
    }
    Ok(CorpusFeatures {
        key,
        dialects: dialects.to_vec(),
        recordings: out,
        skipped_units: skipped,
    })
}

/// Extract every recording (reusing cached entries), then build and cache
/// the corpus descriptor matrix. Per-recording failures are collected rather
/// than aborting the run.
pub fn extract_corpus(manifest: &CorpusManifest, config: &ExtractConfig, cache: &FeatureCache) -> Result<(ExtractSummary, Option<CorpusFeatures>)> {
    config.validate()?;
    let total = manifest.recordings.len();
    let done = AtomicU64::new(0);
    let results = par::map(&manifest.recordings, |entry| -> Result<(String, RecordingFeatures, bool)> {
        let key = recording_key(manifest, entry, config)?;
        let name = recording_file(&entry.recording_id, &key);
        let (features, hit) = match cache.read::<RecordingFeatures>(&name)? {
            Some(f) => (f, true),
            None => {
                let f = extract_recording(manifest, entry, config)?;
                cache.write(&name, &f)?;
                (f, false)
            }
        };
        let n = done.fetch_add(1, Ordering::Relaxed) + 1;
        log::info!(
            "[{n}/{total}] {} {}",
            entry.recording_id,
            if hit { "cached" } else { "extracted" }
        );
        Ok((key, features, hit))
    });

    let mut summary = ExtractSummary {
        recordings: total,
        ..Default::default()
    };
    let mut keys = Vec::new();
    let mut features = Vec::new();
    for (entry, r) in manifest.recordings.iter().zip(results) {
        match r {
            Ok((key, f, hit)) => {
                if hit {
                    summary.cache_hits += 1;
                } else {
                    summary.computed += 1;
                }
                keys.push(key);
                features.push(f);
            }
            Err(e) => {
                log::error!("{}: {e}", entry.recording_id);
                summary.failures.push((entry.recording_id.clone(), e.to_string()));
            }
        }
    }
    if !summary.failures.is_empty() {
        return Ok((summary, None));
    }
    let key = corpus_key(&keys);
    let name = corpus_file(&key);
    let corpus = match cache.read::<CorpusFeatures>(&name)? {
        Some(c) => c,
        None => {
            let c = describe_corpus(&manifest.dialects(), &features, key.clone())?;
            cache.write(&name, &c)?;
            c
        }
    };
    summary.skipped_units = corpus.skipped_units;
    summary.corpus_key = Some(key);
    Ok((summary, Some(corpus)))
}

/// Load the cached descriptor matrix for `manifest` without extracting anything.
pub fn load_corpus_features(manifest: &CorpusManifest, config: &ExtractConfig, cache: &FeatureCache) -> Result<CorpusFeatures> {
    let mut keys = Vec::with_capacity(manifest.recordings.len());
    for entry in &manifest.recordings {
        keys.push(recording_key(manifest, entry, config)?);
    }
    let name = corpus_file(&corpus_key(&keys));
    cache
        .read(&name)?
        .ok_or_else(|| Error::CacheMissing(format!("{} ({})", manifest.root.display(), cache.dir.join(name).display())))
}

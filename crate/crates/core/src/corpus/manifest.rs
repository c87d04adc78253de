use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::wav::wav_header_duration;
use crate::error::{Error, Result};

/// Speaker metadata file expected in the corpus root.
pub const METADATA_FILE: &str = "speakers.tsv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingEntry {
    pub recording_id: String,
    pub speaker_id: String,
    pub dialect: String,
    /// Relative to the manifest root.
    pub wav: String,
    /// Word annotations relative to the root, when present.
    pub annotations: Option<String>,
    pub duration_sec: f64,
    pub sample_rate: u32,
}

/// Recordings, speaker → dialect map and per-dialect durations (minutes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub root: PathBuf,
    pub recordings: Vec<RecordingEntry>,
    pub speakers: BTreeMap<String, String>,
    pub totals: BTreeMap<String, f64>,
}

impl CorpusManifest {
    /// Dialect names in sorted order; the position is the class index.
    pub fn dialects(&self) -> Vec<String> {
        self.speakers.values().cloned().collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn dialect_index(&self, dialect: &str) -> Option<usize> {
        self.dialects().iter().position(|d| d == dialect)
    }

    /// Total recorded seconds per speaker.
    pub fn speaker_durations(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for r in &self.recordings {
            *out.entry(r.speaker_id.clone()).or_insert(0.0) += r.duration_sec;
        }
        out
    }

    pub fn wav_path(&self, entry: &RecordingEntry) -> PathBuf {
        self.root.join(&entry.wav)
    }

    pub fn annotation_path(&self, entry: &RecordingEntry) -> Option<PathBuf> {
        entry.annotations.as_ref().map(|a| self.root.join(a))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

struct MetaLine {
    speaker: String,
    dialect: String,
}

fn read_metadata(root: &Path) -> Result<BTreeMap<String, MetaLine>> {
    let path = root.join(METADATA_FILE);
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').map(str::trim).collect();
        if f.len() != 3 || f.iter().any(|s| s.is_empty()) {
            return Err(Error::MalformedAnnotation {
                path: path.clone(),
                line: i + 1,
                reason: "expected speaker_id<TAB>dialect<TAB>recording_id".into(),
            });
        }
        out.insert(
            f[2].to_string(),
            MetaLine {
                speaker: f[0].to_string(),
                dialect: f[1].to_string(),
            },
        );
    }
    Ok(out)
}

/// Scan `root` for `<id>.wav` files, join them with the speaker metadata and
/// optional `<id>.tsv` annotations, and total durations from the wav headers.
pub fn build_manifest(root: impl AsRef<Path>) -> Result<CorpusManifest> {
    let root = root.as_ref();
    let read_dir = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut wavs = Vec::new();
    for entry in read_dir {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let p = entry.path();
        if p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            wavs.push(p);
        }
    }
    if wavs.is_empty() {
        return Err(Error::NoRecordings(root.to_path_buf()));
    }
    wavs.sort();

    let meta = read_metadata(root)?;
    let mut speakers: BTreeMap<String, String> = BTreeMap::new();
    for m in meta.values() {
        match speakers.get(&m.speaker) {
            Some(d) if *d != m.dialect => {
                return Err(Error::ConflictingDialect {
                    speaker: m.speaker.clone(),
                    first: d.clone(),
                    second: m.dialect.clone(),
                })
            }
            _ => {
                speakers.insert(m.speaker.clone(), m.dialect.clone());
            }
        }
    }

    let mut recordings = Vec::with_capacity(wavs.len());
    let mut seen = BTreeSet::new();
    for wav in &wavs {
        let id = wav.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let m = meta.get(&id).ok_or_else(|| Error::MissingMetadata(id.clone()))?;
        let (duration_sec, sample_rate) = wav_header_duration(wav)?;
        let ann = format!("{id}.tsv");
        recordings.push(RecordingEntry {
            recording_id: id.clone(),
            speaker_id: m.speaker.clone(),
            dialect: m.dialect.clone(),
            wav: wav.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            annotations: root.join(&ann).is_file().then_some(ann),
            duration_sec,
            sample_rate,
        });
        seen.insert(id);
    }
    if let Some(missing) = meta.keys().find(|id| !seen.contains(*id)) {
        return Err(Error::MissingRecording(missing.clone()));
    }

    let mut totals: BTreeMap<String, f64> = BTreeMap::new();
    for r in &recordings {
        *totals.entry(r.dialect.clone()).or_insert(0.0) += r.duration_sec / 60.0;
    }

    Ok(CorpusManifest {
        root: root.to_path_buf(),
        recordings,
        speakers,
        totals,
    })
}

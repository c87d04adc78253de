//! Corpus ingestion: audio, unit annotations, speaker metadata and
//! speaker-disjoint fold plans.

mod annotations;
mod folds;
mod manifest;
mod wav;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use annotations::{format_annotations, parse_annotation_str, parse_annotations, write_annotations};
pub use folds::{greedy_partition, split_folds, FoldPlan, Split};
pub use manifest::{build_manifest, CorpusManifest, RecordingEntry, METADATA_FILE};
pub use wav::{load_wav, write_wav};

/// Labels that mark pauses rather than linguistic units.
pub const PAUSE_LABELS: [&str; 3] = ["<p>", "", "sil"];

/// A mono recording with its speaker and dialect.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioRecording {
    /// Linear amplitude in [-1, 1].
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub recording_id: String,
    pub speaker_id: String,
    pub dialect: String,
}

impl AudioRecording {
    /// A recording without speaker metadata, mostly useful for signal-level work.
    pub fn from_samples(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
            recording_id: String::from("anonymous"),
            speaker_id: String::new(),
            dialect: String::new(),
        }
    }

    pub fn with_meta(
        mut self,
        recording_id: impl Into<String>,
        speaker_id: impl Into<String>,
        dialect: impl Into<String>,
    ) -> Self {
        self.recording_id = recording_id.into();
        self.speaker_id = speaker_id.into();
        self.dialect = dialect.into();
        self
    }

    /// Same metadata, new samples.
    pub fn with_samples(&self, samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
            recording_id: self.recording_id.clone(),
            speaker_id: self.speaker_id.clone(),
            dialect: self.dialect.clone(),
        }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Word,
    Syllable,
}

impl Tier {
    pub const ALL: [Tier; 2] = [Tier::Word, Tier::Syllable];

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Word => "word",
            Tier::Syllable => "syllable",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "word" => Ok(Tier::Word),
            "syllable" => Ok(Tier::Syllable),
            other => Err(Error::InvalidParameter(format!("unknown tier {other:?}"))),
        }
    }
}

/// A word or syllable with its time bounds in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSegment {
    pub start: f64,
    pub end: f64,
    pub tier: Tier,
    pub text: Option<String>,
    pub recording_id: String,
}

impl UnitSegment {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

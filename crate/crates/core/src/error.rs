use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the extraction, training and evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot read wav {path}: {reason}")]
    Wav { path: PathBuf, reason: String },

    #[error("unsupported audio encoding in {path}: {reason}")]
    UnsupportedEncoding { path: PathBuf, reason: String },

    #[error("empty audio: {0}")]
    EmptyAudio(String),

    #[error("{path}:{line}: malformed annotation: {reason}")]
    MalformedAnnotation {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{path}: overlapping units [{first_start}, {first_end}) and [{second_start}, {second_end})")]
    OverlappingUnits {
        path: PathBuf,
        first_start: f64,
        first_end: f64,
        second_start: f64,
        second_end: f64,
    },

    #[error("speaker {speaker} is listed under dialects {first} and {second}")]
    ConflictingDialect {
        speaker: String,
        first: String,
        second: String,
    },

    #[error("recording {0} has no speaker metadata")]
    MissingMetadata(String),

    #[error("metadata references recording {0} but no wav file exists")]
    MissingRecording(String),

    #[error("no recordings in {0}")]
    NoRecordings(PathBuf),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("recording {id} too short for noise estimation: {duration:.3} s < {required:.3} s")]
    TooShort {
        id: String,
        duration: f64,
        required: f64,
    },

    #[error("upsampling from {from} Hz to {to} Hz is not supported")]
    Upsampling { from: u32, to: u32 },

    #[error("speaker {0} has no voiced frames")]
    NoVoicedFrames(String),

    #[error("f0 normalization requires a voiced frame, got {0} Hz")]
    Unvoiced(f64),

    #[error("unit [{start}, {end}) of {recording} covers no analysis frames")]
    EmptyUnit {
        recording: String,
        start: f64,
        end: f64,
    },

    #[error("dimension mismatch: model expects {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("k = {k} exceeds training set size {n}")]
    KTooLarge { k: usize, n: usize },

    #[error("training data contains a single class")]
    SingleClass,

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("label {label} outside [0, {n_classes})")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("non-finite objective during {0} training")]
    NonFinite(String),

    #[error("lstm diverged (seed {seed}, epoch {epoch})")]
    Diverged { seed: u64, epoch: usize },

    #[error("confusion matrix has no reference units")]
    EmptyConfusion,

    #[error("empty test fold (repeat {repeat}, fold {fold})")]
    EmptyTestFold { repeat: usize, fold: usize },

    #[error("speaker leak between train and test: {0}")]
    SpeakerLeak(String),

    #[error("feature cache missing for {0}")]
    CacheMissing(String),

    #[error("unsupported model container version {0}")]
    ModelVersion(u32),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

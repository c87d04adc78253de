//! Speaker-disjoint evaluation: metrics, feature caching, the experiment
//! grid, reports and a synthetic corpus for desk-scale runs.

mod experiment;
mod features;
mod metrics;
mod report;
pub mod synth;

pub use experiment::{build_dataset, run_experiment, sweep, CellResult, CellSpec, EvalReport, Grid, SplitResult, CONTEXT_WIDTH};
pub use features::{
    describe_corpus, extract_corpus, extract_recording, load_corpus_features, recording_key, CorpusFeatures, ExtractConfig,
    ExtractSummary, FeatureCache, RecordingFeatures, RecordingUnits, CACHE_ENV,
};
pub use metrics::{accuracy, uar, ConfusionMatrix};
pub use report::{confusion_csv, report_csv, summary, summary_from_csv, CellScore, Summary, AGGREGATE, REPORT_HEADER};
pub use synth::{default_dialects, generate_synthetic_corpus, null_dialects, DialectParams, SpeakerJitter, SynthConfig};

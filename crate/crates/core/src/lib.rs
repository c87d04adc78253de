//! Prosodic dialect identification.
//!
//! Front end ([`dsp`], [`syllabifier`]) turns recordings into frame-level
//! energy, F0 and spectral-tilt tracks plus syllable tiers; [`prosody`]
//! normalizes them per speaker and summarizes each word or syllable;
//! [`classifiers`] holds kNN, SVM, random forest, linear-chain CRF and LSTM;
//! [`eval`] runs the speaker-disjoint cross-validation grid and generates
//! synthetic corpora.

pub mod classifiers;
pub mod corpus;
pub mod dsp;
pub mod eval;
pub mod error;
pub mod par;
pub mod seed;
pub mod prosody;
pub mod syllabifier;

pub use error::{Error, Result};

//! Supervised classifiers behind one train/predict contract.
//!
//! kNN, SVM and the random forest label vectors independently; the CRF and
//! the LSTM label each recording's units as one ordered sequence.

mod crf;
mod forest;
mod knn;
mod lbfgs;
mod lstm;
mod svm;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prosody::DescriptorVector;

pub use crf::{crf_forward_backward, objective as crf_objective, train_crf, viterbi_decode, ChainPosterior, CrfConfig, CrfParams};
pub use forest::{train_random_forest, Forest, ForestParams};
pub use knn::{knn_classify, KnnModel, KnnParams};
pub use lbfgs::{minimize, LbfgsConfig, LbfgsReport};
pub use lstm::{train_lstm, LstmModel, LstmParams};
pub use svm::{rbf_kernel, train_svm, BinarySvm, SvmModel, SvmParams};

/// Container format version written by [`TrainedModel::to_json`].
pub const MODEL_VERSION: u32 = 1;

/// Unit vectors with labels, grouped by recording in unit order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledDataset {
    pub vectors: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Indices into `vectors`, one group per recording.
    pub sequences: Vec<Vec<usize>>,
    pub n_classes: usize,
    pub dim: usize,
}

impl LabeledDataset {
    pub fn new(vectors: Vec<Vec<f64>>, labels: Vec<usize>, sequences: Vec<Vec<usize>>, n_classes: usize) -> Result<Self> {
        if vectors.len() != labels.len() {
            return Err(Error::InvalidParameter(format!(
                "{} vectors but {} labels",
                vectors.len(),
                labels.len()
            )));
        }
        let dim = vectors.first().map_or(0, Vec::len);
        for v in &vectors {
            if v.len() != dim {
                return Err(Error::DimMismatch { expected: dim, got: v.len() });
            }
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::LabelOutOfRange { label, n_classes });
        }
        let mut seen = vec![false; vectors.len()];
        for &i in sequences.iter().flatten() {
            if i >= vectors.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidParameter(format!("vector {i} is not in exactly one sequence")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidParameter("every vector must belong to a sequence".into()));
        }
        Ok(Self {
            vectors,
            labels,
            sequences,
            n_classes,
            dim,
        })
    }

    /// Each input group becomes one sequence.
    pub fn from_sequences(groups: Vec<(Vec<Vec<f64>>, Vec<usize>)>, n_classes: usize) -> Result<Self> {
        let (mut vectors, mut labels, mut sequences) = (Vec::new(), Vec::new(), Vec::new());
        for (xs, ys) in groups {
            if xs.len() != ys.len() {
                return Err(Error::InvalidParameter("sequence with mismatched labels".into()));
            }
            sequences.push((vectors.len()..vectors.len() + xs.len()).collect());
            vectors.extend(xs);
            labels.extend(ys);
        }
        Self::new(vectors, labels, sequences, n_classes)
    }

    /// Every vector is its own length-1 sequence.
    pub fn from_vectors(vectors: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let sequences = (0..vectors.len()).map(|i| vec![i]).collect();
        Self::new(vectors, labels, sequences, n_classes)
    }

    /// One sequence per recording group.
    pub fn from_descriptors(groups: &[Vec<DescriptorVector>], n_classes: usize) -> Result<Self> {
        Self::from_sequences(
            groups
                .iter()
                .map(|g| (g.iter().map(|v| v.values.clone()).collect(), g.iter().map(|v| v.dialect).collect()))
                .collect(),
            n_classes,
        )
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// Same grouping and labels with transformed vectors.
    fn map_vectors(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        Self {
            vectors: self.vectors.iter().map(|v| f(v)).collect(),
            dim: self.vectors.first().map_or(self.dim, |v| f(v).len()),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Knn,
    Svm,
    Rf,
    Crf,
    Lstm,
    /// Always predicts the most frequent training class.
    Majority,
}

impl ClassifierKind {
    /// The five evaluated classifiers.
    pub const ALL: [ClassifierKind; 5] = [
        ClassifierKind::Knn,
        ClassifierKind::Svm,
        ClassifierKind::Rf,
        ClassifierKind::Crf,
        ClassifierKind::Lstm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Knn => "knn",
            ClassifierKind::Svm => "svm",
            ClassifierKind::Rf => "rf",
            ClassifierKind::Crf => "crf",
            ClassifierKind::Lstm => "lstm",
            ClassifierKind::Majority => "majority",
        }
    }

    pub fn is_sequential(self) -> bool {
        matches!(self, ClassifierKind::Crf | ClassifierKind::Lstm)
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "knn" => ClassifierKind::Knn,
            "svm" => ClassifierKind::Svm,
            "rf" | "forest" | "random_forest" => ClassifierKind::Rf,
            "crf" => ClassifierKind::Crf,
            "lstm" => ClassifierKind::Lstm,
            "majority" => ClassifierKind::Majority,
            _ => return Err(Error::InvalidParameter(format!("unknown classifier {s:?}"))),
        })
    }
}

/// Hyperparameters of every classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparams {
    pub knn: KnnParams,
    pub svm: SvmParams,
    pub rf: ForestParams,
    pub crf: CrfConfig,
    pub lstm: LstmParams,
}

/// Per-dimension z-scoring with training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    /// Dimensions with (near) zero spread are centred only.
    pub fn fit(vectors: &[Vec<f64>]) -> Self {
        let dim = vectors.first().map_or(0, Vec::len);
        let n = vectors.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for v in vectors {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for v in vectors {
            for ((s, x), m) in var.iter_mut().zip(v).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        let std = var.iter().map(|s| (s / n).sqrt()).map(|s| if s > 1e-12 { s } else { 1.0 }).collect();
        Self { mean, std }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.mean).zip(&self.std).map(|((x, m), s)| (x - m) / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum ModelState {
    Knn(KnnModel),
    Svm(SvmModel),
    Rf(Forest),
    Crf(CrfParams),
    Lstm(LstmModel),
    Majority(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ClassifierKind,
    pub dim: usize,
    pub n_classes: usize,
    pub seed: u64,
    pub hyperparams: Hyperparams,
    /// CRF optimizer iterations or LSTM epochs; 0 otherwise.
    pub iterations: usize,
    /// Present for every kind except the random forest and the majority stub.
    pub scaler: Option<Scaler>,
    pub state: ModelState,
}

#[derive(Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    model: TrainedModel,
}

const FORMAT_TAG: &str = "prosodid-model";

/// Train `kind` on `data`. Deterministic given the data, hyperparameters and seed.
pub fn train(kind: ClassifierKind, data: &LabeledDataset, hp: &Hyperparams, seed: u64) -> Result<TrainedModel> {
    if data.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let scaler = match kind {
        ClassifierKind::Rf | ClassifierKind::Majority => None,
        _ => Some(Scaler::fit(&data.vectors)),
    };
    let scaled = match &scaler {
        Some(s) => data.map_vectors(|v| s.apply(v)),
        None => data.clone(),
    };
    let mut iterations = 0;
    let state = match kind {
        ClassifierKind::Knn => ModelState::Knn(KnnModel::fit(&scaled, &hp.knn)?),
        ClassifierKind::Svm => ModelState::Svm(train_svm(&scaled, &hp.svm)?),
        ClassifierKind::Rf => ModelState::Rf(train_random_forest(&scaled, &hp.rf, seed)?),
        ClassifierKind::Crf => {
            let (params, report) = train_crf(&scaled, &hp.crf)?;
            iterations = report.iterations;
            ModelState::Crf(params)
        }
        ClassifierKind::Lstm => {
            let (model, epochs) = train_lstm(&scaled, &hp.lstm, seed)?;
            iterations = epochs;
            ModelState::Lstm(model)
        }
        ClassifierKind::Majority => {
            let counts = data.class_counts();
            let best = (0..counts.len()).fold(0, |b, c| if counts[c] > counts[b] { c } else { b });
            ModelState::Majority(best)
        }
    };
    Ok(TrainedModel {
        kind,
        dim: data.dim,
        n_classes: data.n_classes,
        seed,
        hyperparams: hp.clone(),
        iterations,
        scaler,
        state,
    })
}

impl TrainedModel {
    /// One label per vector of `data`, in vector order.
    pub fn predict(&self, data: &LabeledDataset) -> Result<Vec<usize>> {
        if data.is_empty() {
            return Ok(Vec::new());
        }
        if data.dim != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: data.dim,
            });
        }
        let scaled;
        let data = match &self.scaler {
            Some(s) => {
                scaled = data.map_vectors(|v| s.apply(v));
                &scaled
            }
            None => data,
        };
        let mut out = vec![0; data.len()];
        match &self.state {
            ModelState::Crf(p) => self.per_sequence(data, &mut out, |xs| viterbi_decode(p, xs)),
            ModelState::Lstm(m) => self.per_sequence(data, &mut out, |xs| m.predict_sequence(xs)),
            state => {
                let labels = crate::par::map(&data.vectors, |v| match state {
                    ModelState::Knn(m) => m.predict(v),
                    ModelState::Svm(m) => m.predict(v),
                    ModelState::Rf(f) => f.predict(v),
                    ModelState::Majority(c) => *c,
                    ModelState::Crf(_) | ModelState::Lstm(_) => unreachable!("handled above"),
                });
                out.copy_from_slice(&labels);
            }
        }
        Ok(out)
    }

    fn per_sequence<F>(&self, data: &LabeledDataset, out: &mut [usize], decode: F)
    where
        F: Fn(&[&[f64]]) -> Vec<usize> + Sync + Send,
    {
        let decoded = crate::par::map(&data.sequences, |seq| {
            let xs: Vec<&[f64]> = seq.iter().map(|&i| data.vectors[i].as_slice()).collect();
            decode(&xs)
        });
        for (seq, labels) in data.sequences.iter().zip(decoded) {
            for (&i, l) in seq.iter().zip(labels) {
                out[i] = l;
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Container {
            format: FORMAT_TAG.into(),
            version: MODEL_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let head: serde_json::Value = serde_json::from_str(s)?;
        let version = head.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if head.get("format").and_then(|v| v.as_str()) != Some(FORMAT_TAG) || version != MODEL_VERSION {
            return Err(Error::ModelVersion(version));
        }
        let c: Container = serde_json::from_value(head)?;
        Ok(c.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Index of the largest value, lowest index on ties.
pub(crate) fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

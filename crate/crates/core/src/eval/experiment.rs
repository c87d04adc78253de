use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::features::CorpusFeatures;
use super::metrics::ConfusionMatrix;
use crate::classifiers::{train, ClassifierKind, Hyperparams, LabeledDataset};
use crate::corpus::{FoldPlan, Split, Tier};
use crate::error::{Error, Result};
use crate::par;
use crate::prosody::{stack_values, FeatureCombo};
use crate::seed;

/// Units on each side of the centre in a context vector.
pub const CONTEXT_WIDTH: usize = 2;

/// One grid cell: what is classified, with which features and by what.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellSpec {
    pub tier: Tier,
    pub combo: FeatureCombo,
    pub context: bool,
    pub classifier: ClassifierKind,
}

impl CellSpec {
    /// Input dimension seen by the classifier.
    pub fn dim(&self) -> usize {
        let base = self.combo.dim();
        if self.context {
            (2 * CONTEXT_WIDTH + 1) * base
        } else {
            base
        }
    }
}

impl fmt::Display for CellSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} context={} {}",
            self.tier,
            self.combo,
            if self.context { "on" } else { "off" },
            self.classifier
        )
    }
}

/// The cartesian product swept by [`sweep`], iterated tier-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub tiers: Vec<Tier>,
    pub combos: Vec<FeatureCombo>,
    pub contexts: Vec<bool>,
    pub classifiers: Vec<ClassifierKind>,
}

impl Default for Grid {
    /// 2 tiers × 15 combinations × 2 context settings × 5 classifiers.
    fn default() -> Self {
        Self {
            tiers: Tier::ALL.to_vec(),
            combos: FeatureCombo::all(),
            contexts: vec![false, true],
            classifiers: ClassifierKind::ALL.to_vec(),
        }
    }
}

impl Grid {
    pub fn cells(&self) -> Vec<CellSpec> {
        let mut out = Vec::with_capacity(self.tiers.len() * self.combos.len() * self.contexts.len() * self.classifiers.len());
        for &tier in &self.tiers {
            for &combo in &self.combos {
                for &context in &self.contexts {
                    for &classifier in &self.classifiers {
                        out.push(CellSpec {
                            tier,
                            combo,
                            context,
                            classifier,
                        });
                    }
                }
            }
        }
        out
    }
}

/// Scores of one train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub repeat: usize,
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub confusion: ConfusionMatrix,
    pub uar: f64,
    pub accuracy: f64,
    /// Classes without test units, left out of `uar`.
    pub absent_classes: Vec<usize>,
}

/// All splits of one cell plus aggregates, or the error that stopped it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub spec: CellSpec,
    pub splits: Vec<SplitResult>,
    /// Mean over folds within each repeat.
    pub repeat_uar: Vec<f64>,
    /// Mean of `repeat_uar`.
    pub uar: f64,
    pub accuracy: f64,
    /// Sum of the split matrices.
    pub confusion: ConfusionMatrix,
    pub error: Option<String>,
}

impl CellResult {
    fn failed(spec: CellSpec, n_classes: usize, e: &Error) -> Self {
        Self {
            spec,
            splits: Vec::new(),
            repeat_uar: Vec::new(),
            uar: f64::NAN,
            accuracy: f64::NAN,
            confusion: ConfusionMatrix::new(n_classes),
            error: Some(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dialects: Vec<String>,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub cells: Vec<CellResult>,
}

impl EvalReport {
    pub fn errored(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| c.error.is_some())
    }
}

/// Unit vectors of the recordings whose speaker is in `speakers`, one
/// sequence per recording, together with the speakers actually used.
pub fn build_dataset(features: &CorpusFeatures, speakers: &BTreeSet<String>, spec: &CellSpec) -> Result<(LabeledDataset, BTreeSet<String>)> {
    let mut groups = Vec::new();
    let mut used = BTreeSet::new();
    for r in &features.recordings {
        if !speakers.contains(&r.speaker_id) {
            continue;
        }
        let units = r.tier(spec.tier);
        if units.is_empty() {
            continue;
        }
        let values: Vec<Vec<f64>> = units.iter().map(|u| spec.combo.select(&u.values)).collect();
        let values = if spec.context { stack_values(&values, CONTEXT_WIDTH) } else { values };
        groups.push((values, vec![r.dialect; units.len()]));
        used.insert(r.speaker_id.clone());
    }
    Ok((LabeledDataset::from_sequences(groups, features.dialects.len())?, used))
}

fn run_split(features: &CorpusFeatures, split: &Split, index: usize, spec: &CellSpec, hp: &Hyperparams, base_seed: u64) -> Result<SplitResult> {
    split.check_disjoint()?;
    let (train_set, train_speakers) = build_dataset(features, &split.train, spec)?;
    let (test_set, test_speakers) = build_dataset(features, &split.test, spec)?;
    // re-check on the speakers whose units were actually used
    if let Some(s) = train_speakers.intersection(&test_speakers).next() {
        return Err(Error::SpeakerLeak(s.clone()));
    }
    if test_set.is_empty() {
        return Err(Error::EmptyTestFold {
            repeat: split.repeat,
            fold: split.fold,
        });
    }
    let model = train(spec.classifier, &train_set, hp, seed::derive(base_seed, index as u64))?;
    let hyp = model.predict(&test_set)?;
    let confusion = ConfusionMatrix::from_labels(features.dialects.len(), &test_set.labels, &hyp)?;
    Ok(SplitResult {
        repeat: split.repeat,
        fold: split.fold,
        n_train: train_set.len(),
        n_test: test_set.len(),
        uar: confusion.uar()?,
        accuracy: confusion.accuracy()?,
        absent_classes: confusion.absent_classes(),
        confusion,
    })
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Mean over folds within each repeat, then over repeats.
fn aggregate(splits: &[SplitResult], metric: impl Fn(&SplitResult) -> f64) -> (Vec<f64>, f64) {
    let repeats: BTreeSet<usize> = splits.iter().map(|s| s.repeat).collect();
    let per_repeat: Vec<f64> = repeats
        .iter()
        .map(|&r| mean(&splits.iter().filter(|s| s.repeat == r).map(&metric).collect::<Vec<_>>()))
        .collect();
    let overall = mean(&per_repeat);
    (per_repeat, overall)
}

/// Every split of `plan` for one cell. Deterministic given `seed`.
pub fn run_experiment(features: &CorpusFeatures, plan: &FoldPlan, spec: &CellSpec, hp: &Hyperparams, seed: u64) -> Result<CellResult> {
    let splits = plan.splits();
    if splits.is_empty() {
        return Err(Error::InvalidParameter("fold plan has no splits".into()));
    }
    let results = par::map_range(splits.len(), |i| run_split(features, &splits[i], i, spec, hp, seed));
    let splits = results.into_iter().collect::<Result<Vec<_>>>()?;
    let (repeat_uar, uar) = aggregate(&splits, |s| s.uar);
    let (_, accuracy) = aggregate(&splits, |s| s.accuracy);
    let mut confusion = ConfusionMatrix::new(features.dialects.len());
    for s in &splits {
        confusion.add(&s.confusion);
    }
    Ok(CellResult {
        spec: *spec,
        splits,
        repeat_uar,
        uar,
        accuracy,
        confusion,
        error: None,
    })
}

/// Run every cell of `grid`. A failing cell is recorded in its result and
/// does not stop the others.
pub fn sweep(features: &CorpusFeatures, plan: &FoldPlan, grid: &Grid, hp: &Hyperparams, seed: u64) -> EvalReport {
    let cells = grid.cells();
    let n_classes = features.dialects.len();
    let results = par::map(&cells, |spec| {
        let r = run_experiment(features, plan, spec, hp, seed).unwrap_or_else(|e| {
            log::error!("{spec}: {e}");
            CellResult::failed(*spec, n_classes, &e)
        });
        log::info!("{spec}: UAR {:.4}", r.uar);
        r
    });
    EvalReport {
        dialects: features.dialects.clone(),
        folds: plan.k,
        repeats: plan.repeats,
        seed,
        cells: results,
    }
}

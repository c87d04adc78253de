use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CorpusManifest;
use crate::error::{Error, Result};
use crate::seed;

/// Speaker groups per dialect for every repeat of a k-fold protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    /// `groups[repeat][dialect][fold]` lists the speakers tested in that fold.
    pub groups: Vec<BTreeMap<String, Vec<Vec<String>>>>,
}

/// One train/test partition of the speakers.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub repeat: usize,
    pub fold: usize,
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

impl Split {
    pub fn check_disjoint(&self) -> Result<()> {
        match self.train.intersection(&self.test).next() {
            Some(s) => Err(Error::SpeakerLeak(s.clone())),
            None => Ok(()),
        }
    }
}

impl FoldPlan {
    /// All `repeats × k` splits, repeat-major.
    pub fn splits(&self) -> Vec<Split> {
        let mut out = Vec::with_capacity(self.repeats * self.k);
        for (repeat, per_dialect) in self.groups.iter().enumerate() {
            for fold in 0..self.k {
                let mut train = BTreeSet::new();
                let mut test = BTreeSet::new();
                for groups in per_dialect.values() {
                    for (g, speakers) in groups.iter().enumerate() {
                        let target = if g == fold { &mut test } else { &mut train };
                        target.extend(speakers.iter().cloned());
                    }
                }
                out.push(Split {
                    repeat,
                    fold,
                    train,
                    test,
                });
            }
        }
        out
    }

    /// Max minus min total duration (seconds) over the groups of each dialect, per repeat.
    pub fn spreads(&self, manifest: &CorpusManifest) -> Vec<BTreeMap<String, f64>> {
        let durations = manifest.speaker_durations();
        self.groups
            .iter()
            .map(|per_dialect| {
                per_dialect
                    .iter()
                    .map(|(d, groups)| {
                        let loads: Vec<f64> = groups
                            .iter()
                            .map(|g| g.iter().map(|s| durations.get(s).copied().unwrap_or(0.0)).sum())
                            .collect();
                        let max = loads.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let min = loads.iter().cloned().fold(f64::INFINITY, f64::min);
                        (d.clone(), max - min)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Longest-first greedy packing of `durations` into `k` bins.
///
/// Items are visited in descending duration (stable, so equal durations keep
/// their input order) and each goes to the currently lightest bin, lowest
/// index on ties. Returns item indices per bin.
pub fn greedy_partition(durations: &[f64], k: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..durations.len()).collect();
    order.sort_by(|&a, &b| durations[b].total_cmp(&durations[a]));
    let mut bins = vec![Vec::new(); k];
    let mut loads = vec![0.0f64; k];
    for i in order {
        let mut best = 0;
        for b in 1..k {
            if loads[b] < loads[best] {
                best = b;
            }
        }
        bins[best].push(i);
        loads[best] += durations[i];
    }
    bins
}

/// Speaker-disjoint k-fold plan, balanced by duration within each dialect.
///
/// Each repeat shuffles speakers before the greedy packing (so equal-duration
/// speakers land differently) and permutes the resulting groups per dialect,
/// which changes which speakers of different dialects are tested together.
/// Dialects with fewer than `k` speakers get empty groups and a warning.
pub fn split_folds(manifest: &CorpusManifest, k: usize, repeats: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k must be >= 2, got {k}")));
    }
    if repeats == 0 {
        return Err(Error::InvalidParameter("repeats must be >= 1".into()));
    }
    let durations = manifest.speaker_durations();
    let mut by_dialect: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (speaker, dialect) in &manifest.speakers {
        if durations.contains_key(speaker) {
            by_dialect.entry(dialect).or_default().push(speaker);
        }
    }
    for (d, speakers) in &by_dialect {
        if speakers.len() < k {
            log::warn!(
                "dialect {d} has {} speakers for {k} folds; some test folds will not contain it",
                speakers.len()
            );
        }
    }

    let mut groups = Vec::with_capacity(repeats);
    for repeat in 0..repeats {
        let mut per_dialect = BTreeMap::new();
        for (di, (dialect, speakers)) in by_dialect.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed::derive(seed, repeat as u64), di as u64));
            let mut shuffled = speakers.clone();
            shuffled.shuffle(&mut rng);
            let d: Vec<f64> = shuffled.iter().map(|s| durations[*s]).collect();
            let mut bins: Vec<Vec<String>> = greedy_partition(&d, k)
                .into_iter()
                .map(|b| {
                    let mut names: Vec<String> = b.into_iter().map(|i| shuffled[i].to_string()).collect();
                    names.sort();
                    names
                })
                .collect();
            bins.shuffle(&mut rng);
            per_dialect.insert(dialect.to_string(), bins);
        }
        groups.push(per_dialect);
    }
    Ok(FoldPlan {
        k,
        repeats,
        seed,
        groups,
    })
}

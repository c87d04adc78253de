use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Nodes with fewer samples become leaves.
    pub min_split: usize,
    /// Features tried per split; `None` means `floor(sqrt(dim))`.
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 50,
            min_split: 2,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf(usize),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(c) => return *c,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub n_classes: usize,
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Majority over trees, lowest class on ties.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        for t in &self.trees {
            votes[t.predict(x)] += 1;
        }
        majority(&votes)
    }
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for c in 1..counts.len() {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    best
}

/// Bagged CART trees with Gini splits; tree `t` draws from its own stream
/// derived from `seed`, so the forest does not depend on scheduling.
pub fn train_random_forest(data: &LabeledDataset, params: &ForestParams, seed: u64) -> Result<Forest> {
    if data.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidParameter("forest needs at least one tree".into()));
    }
    let mtry = params
        .max_features
        .unwrap_or_else(|| (data.dim as f64).sqrt().floor() as usize)
        .clamp(1, data.dim.max(1));
    let trees = crate::par::map_range(params.n_trees, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::derive(seed, t as u64));
        let n = data.len();
        let boot: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let mut b = Builder {
            data,
            mtry,
            min_split: params.min_split.max(2),
            rng,
            nodes: Vec::new(),
        };
        b.grow(boot);
        Tree { nodes: b.nodes }
    });
    Ok(Forest {
        n_classes: data.n_classes,
        trees,
    })
}

struct Builder<'a> {
    data: &'a LabeledDataset,
    mtry: usize,
    min_split: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

impl Builder<'_> {
    /// Grow the subtree over `idx`, returning its node index.
    fn grow(&mut self, idx: Vec<usize>) -> usize {
        let k = self.data.n_classes;
        let mut counts = vec![0usize; k];
        for &i in &idx {
            counts[self.data.labels[i]] += 1;
        }
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf(majority(&counts)));
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || idx.len() < self.min_split {
            return me;
        }
        let Some((feature, threshold)) = self.best_split(&idx, &counts) else {
            return me;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.data.vectors[i][feature] <= threshold);
        let left = self.grow(l);
        let right = self.grow(r);
        self.nodes[me] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }

    /// Best Gini split over `mtry` random features; if none of them separates
    /// the node, the remaining features are tried in random order.
    fn best_split(&mut self, idx: &[usize], counts: &[usize]) -> Option<(usize, f64)> {
        let dim = self.data.dim;
        let order = sample(&mut self.rng, dim, dim).into_vec();
        let parent = gini(counts, idx.len());
        let mut best: Option<(f64, usize, f64)> = None;
        for (tried, &f) in order.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            if let Some((score, thr)) = self.scan(idx, f, counts) {
                if score < parent - 1e-12 && best.is_none_or(|b| score < b.0) {
                    best = Some((score, f, thr));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    /// Lowest weighted child impurity over thresholds of feature `f`.
    fn scan(&self, idx: &[usize], f: usize, counts: &[usize]) -> Option<(f64, f64)> {
        let x = &self.data.vectors;
        let mut sorted: Vec<(f64, usize)> = idx.iter().map(|&i| (x[i][f], self.data.labels[i])).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let n = sorted.len();
        let mut left = vec![0usize; counts.len()];
        let mut best: Option<(f64, f64)> = None;
        for s in 0..n - 1 {
            left[sorted[s].1] += 1;
            if sorted[s].0 == sorted[s + 1].0 {
                continue;
            }
            let nl = s + 1;
            let right: Vec<usize> = counts.iter().zip(&left).map(|(c, l)| c - l).collect();
            let score = (nl as f64 * gini(&left, nl) + (n - nl) as f64 * gini(&right, n - nl)) / n as f64;
            if best.is_none_or(|b| score < b.0) {
                let mid = 0.5 * (sorted[s].0 + sorted[s + 1].0);
                // the midpoint can round up to the right value
                let thr = if mid < sorted[s + 1].0 { mid } else { sorted[s].0 };
                best = Some((score, thr));
            }
        }
        best
    }
}

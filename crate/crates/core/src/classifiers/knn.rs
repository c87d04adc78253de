use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 10 }
    }
}

/// Majority vote among the `k` Euclidean-nearest training vectors.
///
/// Equal distances are ordered by training index. Vote ties go to the class
/// with the smallest mean distance among its voters, then the lowest index.
pub fn knn_classify(vectors: &[Vec<f64>], labels: &[usize], n_classes: usize, query: &[f64], k: usize) -> Result<usize> {
    if k == 0 || k > vectors.len() {
        return Err(Error::KTooLarge { k, n: vectors.len() });
    }
    let mut dist: Vec<(f64, usize)> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            if v.len() != query.len() {
                return Err(Error::DimMismatch {
                    expected: v.len(),
                    got: query.len(),
                });
            }
            Ok((v.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
        })
        .collect::<Result<_>>()?;
    dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut votes = vec![0usize; n_classes];
    let mut dsum = vec![0.0; n_classes];
    for &(d2, i) in &dist[..k] {
        votes[labels[i]] += 1;
        dsum[labels[i]] += d2.sqrt();
    }
    let mut best = 0;
    for c in 1..n_classes {
        let mean = |c: usize| dsum[c] / votes[c] as f64;
        let better = votes[c] > votes[best] || (votes[c] == votes[best] && votes[c] > 0 && mean(c) < mean(best));
        if better {
            best = c;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub n_classes: usize,
    pub vectors: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl KnnModel {
    pub fn fit(data: &LabeledDataset, params: &KnnParams) -> Result<Self> {
        if params.k == 0 || params.k > data.len() {
            return Err(Error::KTooLarge {
                k: params.k,
                n: data.len(),
            });
        }
        Ok(Self {
            k: params.k,
            n_classes: data.n_classes,
            vectors: data.vectors.clone(),
            labels: data.labels.clone(),
        })
    }

    pub fn predict(&self, query: &[f64]) -> usize {
        knn_classify(&self.vectors, &self.labels, self.n_classes, query, self.k).expect("dimension checked by caller")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Full sort of every distance, then the same voting rule written out longhand.
    fn brute(vectors: &[Vec<f64>], labels: &[usize], n_classes: usize, q: &[f64], k: usize) -> usize {
        let mut all: Vec<(f64, usize)> = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (v.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i))
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut per_class: Vec<Vec<f64>> = vec![Vec::new(); n_classes];
        for &(d, i) in all.iter().take(k) {
            per_class[labels[i]].push(d.sqrt());
        }
        let mut ranked: Vec<(usize, f64, usize)> = per_class
            .iter()
            .enumerate()
            .filter(|(_, d)| !d.is_empty())
            .map(|(c, d)| (d.len(), d.iter().sum::<f64>() / d.len() as f64, c))
            .collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.partial_cmp(&b.1).unwrap()).then(a.2.cmp(&b.2)));
        ranked[0].2
    }

    #[test]
    fn identical_query_with_k1() {
        let v = vec![vec![0.0, 1.0], vec![5.0, 5.0], vec![-3.0, 2.0]];
        let l = vec![2, 0, 1];
        for (x, &y) in v.iter().zip(&l) {
            assert_eq!(knn_classify(&v, &l, 3, x, 1).unwrap(), y);
        }
    }

    #[test]
    fn six_four_majority() {
        let mut v: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0 + i as f64 * 0.1]).collect();
        v.extend((0..4).map(|i| vec![-0.1 - i as f64 * 0.01]));
        let l = [vec![0; 6], vec![1; 4]].concat();
        // class 1 points are closer but outvoted
        assert_eq!(knn_classify(&v, &l, 2, &[0.0], 10).unwrap(), 0);
    }

    #[test]
    fn vote_tie_goes_to_closer_class() {
        let v = vec![vec![1.0], vec![1.1], vec![-0.5], vec![-0.6]];
        let l = vec![0, 0, 1, 1];
        assert_eq!(knn_classify(&v, &l, 2, &[0.0], 4).unwrap(), 1);
        // exact symmetry falls back to the lowest class
        let v = vec![vec![1.0], vec![-1.0]];
        assert_eq!(knn_classify(&v, &[1, 0], 2, &[0.0], 2).unwrap(), 0);
    }

    #[test]
    fn k_too_large() {
        let v = vec![vec![0.0]; 3];
        assert!(matches!(knn_classify(&v, &[0, 0, 0], 1, &[0.0], 4), Err(Error::KTooLarge { k: 4, n: 3 })));
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..3 {
            let dim = 2 + trial;
            let v: Vec<Vec<f64>> = (0..200).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let l: Vec<usize> = (0..200).map(|_| rng.gen_range(0..5)).collect();
            for _ in 0..100 {
                let q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.2..1.2)).collect();
                assert_eq!(knn_classify(&v, &l, 5, &q, 10).unwrap(), brute(&v, &l, 5, &q, 10));
            }
        }
    }
}

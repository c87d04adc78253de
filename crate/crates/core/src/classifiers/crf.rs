//! Linear-chain CRF over real-valued unit vectors.
//!
//! Position `t` with label `y` scores `W_y · x_t + b_y`; consecutive labels
//! add `T[y_prev][y]`. Inference is forward-backward in log space, decoding is
//! max-product, and training minimizes the L2-regularized negative
//! conditional log-likelihood with L-BFGS.

use serde::{Deserialize, Serialize};

use super::lbfgs::{minimize, LbfgsConfig, LbfgsReport};
use super::{log_sum_exp, LabeledDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrfConfig {
    pub l2: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub history: usize,
}

impl Default for CrfConfig {
    fn default() -> Self {
        Self {
            l2: 1.0,
            max_iter: 100,
            grad_tol: 1e-5,
            history: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfParams {
    pub n_classes: usize,
    pub dim: usize,
    /// `n_classes × dim`, row-major.
    pub emission: Vec<f64>,
    /// `n_classes × n_classes`, `[prev * n_classes + next]`.
    pub transition: Vec<f64>,
    pub bias: Vec<f64>,
}

impl CrfParams {
    pub fn zeros(n_classes: usize, dim: usize) -> Self {
        Self {
            n_classes,
            dim,
            emission: vec![0.0; n_classes * dim],
            transition: vec![0.0; n_classes * n_classes],
            bias: vec![0.0; n_classes],
        }
    }

    pub fn n_params(&self) -> usize {
        self.emission.len() + self.transition.len() + self.bias.len()
    }

    /// Flat view in (emission, transition, bias) order.
    pub fn to_flat(&self) -> Vec<f64> {
        [self.emission.as_slice(), &self.transition, &self.bias].concat()
    }

    pub fn from_flat(n_classes: usize, dim: usize, theta: &[f64]) -> Self {
        let (e, rest) = theta.split_at(n_classes * dim);
        let (t, b) = rest.split_at(n_classes * n_classes);
        Self {
            n_classes,
            dim,
            emission: e.to_vec(),
            transition: t.to_vec(),
            bias: b.to_vec(),
        }
    }

    fn trans(&self, prev: usize, next: usize) -> f64 {
        self.transition[prev * self.n_classes + next]
    }

    /// Emission scores per position, `L × K`.
    pub fn emissions(&self, xs: &[&[f64]]) -> Vec<Vec<f64>> {
        let k = self.n_classes;
        xs.iter()
            .map(|x| {
                (0..k)
                    .map(|y| {
                        let w = &self.emission[y * self.dim..(y + 1) * self.dim];
                        w.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() + self.bias[y]
                    })
                    .collect()
            })
            .collect()
    }

    /// Total score of one labeling.
    pub fn score(&self, xs: &[&[f64]], labels: &[usize]) -> f64 {
        let e = self.emissions(xs);
        let mut s: f64 = labels.iter().enumerate().map(|(t, &y)| e[t][y]).sum();
        for w in labels.windows(2) {
            s += self.trans(w[0], w[1]);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainPosterior {
    pub log_z: f64,
    /// `L × K`.
    pub marginals: Vec<Vec<f64>>,
    /// `(L − 1) × K × K`, entry `[t][prev * K + next]` for positions `t, t + 1`.
    pub pairwise: Vec<Vec<f64>>,
}

pub fn crf_forward_backward(params: &CrfParams, xs: &[&[f64]]) -> ChainPosterior {
    let k = params.n_classes;
    let l = xs.len();
    if l == 0 {
        return ChainPosterior {
            log_z: 0.0,
            marginals: Vec::new(),
            pairwise: Vec::new(),
        };
    }
    let e = params.emissions(xs);
    let mut alpha = vec![vec![0.0; k]; l];
    alpha[0].clone_from(&e[0]);
    let mut buf = vec![0.0; k];
    for t in 1..l {
        for y in 0..k {
            for (p, b) in buf.iter_mut().enumerate() {
                *b = alpha[t - 1][p] + params.trans(p, y);
            }
            alpha[t][y] = e[t][y] + log_sum_exp(&buf);
        }
    }
    let mut beta = vec![vec![0.0; k]; l];
    for t in (0..l - 1).rev() {
        for p in 0..k {
            for (y, b) in buf.iter_mut().enumerate() {
                *b = params.trans(p, y) + e[t + 1][y] + beta[t + 1][y];
            }
            beta[t][p] = log_sum_exp(&buf);
        }
    }
    let log_z = log_sum_exp(&alpha[l - 1]);
    let marginals = (0..l)
        .map(|t| (0..k).map(|y| (alpha[t][y] + beta[t][y] - log_z).exp()).collect())
        .collect();
    let pairwise = (0..l - 1)
        .map(|t| {
            let mut m = vec![0.0; k * k];
            for p in 0..k {
                for y in 0..k {
                    m[p * k + y] = (alpha[t][p] + params.trans(p, y) + e[t + 1][y] + beta[t + 1][y] - log_z).exp();
                }
            }
            m
        })
        .collect();
    ChainPosterior {
        log_z,
        marginals,
        pairwise,
    }
}

/// Highest-scoring labeling; every max picks the lowest label among equals.
pub fn viterbi_decode(params: &CrfParams, xs: &[&[f64]]) -> Vec<usize> {
    let k = params.n_classes;
    let l = xs.len();
    if l == 0 {
        return Vec::new();
    }
    let e = params.emissions(xs);
    let mut delta = e[0].clone();
    let mut back = vec![vec![0usize; k]; l];
    for t in 1..l {
        let mut next = vec![0.0; k];
        for y in 0..k {
            let mut best = 0;
            for p in 1..k {
                if delta[p] + params.trans(p, y) > delta[best] + params.trans(best, y) {
                    best = p;
                }
            }
            next[y] = delta[best] + params.trans(best, y) + e[t][y];
            back[t][y] = best;
        }
        delta = next;
    }
    let mut y = super::argmax(&delta);
    let mut out = vec![0; l];
    for t in (0..l).rev() {
        out[t] = y;
        y = back[t][y];
    }
    out
}

/// Negative log-likelihood of one labeled sequence and its gradient (added into `grad`).
fn sequence_nll(params: &CrfParams, xs: &[&[f64]], labels: &[usize], grad: &mut [f64]) -> f64 {
    let (k, d) = (params.n_classes, params.dim);
    let post = crf_forward_backward(params, xs);
    let (ge, rest) = grad.split_at_mut(k * d);
    let (gt, gb) = rest.split_at_mut(k * k);
    for (t, x) in xs.iter().enumerate() {
        for y in 0..k {
            let coef = post.marginals[t][y] - f64::from(u8::from(labels[t] == y));
            if coef != 0.0 {
                for (g, xi) in ge[y * d..(y + 1) * d].iter_mut().zip(x.iter()) {
                    *g += coef * xi;
                }
                gb[y] += coef;
            }
        }
    }
    for (t, pw) in post.pairwise.iter().enumerate() {
        for (g, p) in gt.iter_mut().zip(pw) {
            *g += p;
        }
        gt[labels[t] * k + labels[t + 1]] -= 1.0;
    }
    post.log_z - params.score(xs, labels)
}

/// Regularized objective `Σ NLL + (l2 / 2)·‖θ‖²` and its gradient.
pub fn objective(theta: &[f64], data: &LabeledDataset, l2: f64, grad: &mut [f64]) -> f64 {
    let params = CrfParams::from_flat(data.n_classes, data.dim, theta);
    let n = theta.len();
    let parts = crate::par::map(&data.sequences, |seq| {
        let xs: Vec<&[f64]> = seq.iter().map(|&i| data.vectors[i].as_slice()).collect();
        let ys: Vec<usize> = seq.iter().map(|&i| data.labels[i]).collect();
        let mut g = vec![0.0; n];
        let f = sequence_nll(&params, &xs, &ys, &mut g);
        (f, g)
    });
    let mut total = 0.0;
    for (g, t) in grad.iter_mut().zip(theta) {
        *g = l2 * t;
    }
    for (f, g) in parts {
        total += f;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    total + 0.5 * l2 * theta.iter().map(|t| t * t).sum::<f64>()
}

/// Train from zero weights; stops after `max_iter` L-BFGS iterations or when
/// the gradient norm drops below `grad_tol`.
pub fn train_crf(data: &LabeledDataset, cfg: &CrfConfig) -> Result<(CrfParams, LbfgsReport)> {
    if data.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut theta = CrfParams::zeros(data.n_classes, data.dim).to_flat();
    let lb = LbfgsConfig {
        history: cfg.history,
        max_iter: cfg.max_iter,
        grad_tol: cfg.grad_tol,
        ..Default::default()
    };
    let report = minimize(&mut theta, &lb, |x, g| objective(x, data, cfg.l2, g));
    if report.values.iter().any(|v| !v.is_finite()) || theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("crf".into()));
    }
    Ok((CrfParams::from_flat(data.n_classes, data.dim, &theta), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(k: usize, d: usize, rng: &mut ChaCha8Rng) -> CrfParams {
        let mut p = CrfParams::zeros(k, d);
        for v in p.emission.iter_mut().chain(&mut p.transition).chain(&mut p.bias) {
            *v = rng.gen_range(-1.5..1.5);
        }
        p
    }

    fn random_seq(l: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..l).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    }

    fn all_labelings(l: usize, k: usize) -> Vec<Vec<usize>> {
        (0..k.pow(l as u32))
            .map(|mut code| {
                let mut y = vec![0; l];
                for t in (0..l).rev() {
                    y[t] = code % k;
                    code /= k;
                }
                y
            })
            .collect()
    }

    fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn uniform_model() {
        let p = CrfParams::zeros(5, 3);
        let seq = vec![vec![0.3, -1.0, 2.0]; 4];
        let post = crf_forward_backward(&p, &refs(&seq));
        assert!((post.log_z - 4.0 * 5f64.ln()).abs() < 1e-12);
        for m in post.marginals.iter().flatten() {
            assert!((m - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn length_one_is_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_params(3, 2, &mut rng);
        let seq = random_seq(1, 2, &mut rng);
        let post = crf_forward_backward(&p, &refs(&seq));
        let e = p.emissions(&refs(&seq));
        let z: f64 = e[0].iter().map(|v| v.exp()).sum();
        for y in 0..3 {
            assert!((post.marginals[0][y] - e[0][y].exp() / z).abs() < 1e-12);
        }
        assert!(post.pairwise.is_empty());
    }

    #[test]
    fn partition_and_viterbi_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for l in 1..=6 {
            for k in 2..=3 {
                let p = random_params(k, 3, &mut rng);
                let seq = random_seq(l, 3, &mut rng);
                let xs = refs(&seq);
                let scores: Vec<f64> = all_labelings(l, k).iter().map(|y| p.score(&xs, y)).collect();
                let brute_z = scores.iter().map(|s| s.exp()).sum::<f64>().ln();
                let post = crf_forward_backward(&p, &xs);
                assert!((post.log_z - brute_z).abs() <= 1e-8 * brute_z.abs().max(1.0));
                for m in &post.marginals {
                    assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
                for pw in &post.pairwise {
                    assert!((pw.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
                let labelings = all_labelings(l, k);
                let mut best = 0;
                for (i, s) in scores.iter().enumerate() {
                    if *s > scores[best] {
                        best = i;
                    }
                }
                assert_eq!(viterbi_decode(&p, &xs), labelings[best]);
            }
        }
    }

    #[test]
    fn viterbi_tie_and_factorized_cases() {
        let p = CrfParams::zeros(4, 2);
        let seq = vec![vec![1.0, 2.0]; 5];
        assert_eq!(viterbi_decode(&p, &refs(&seq)), vec![0; 5]);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = random_params(3, 2, &mut rng);
        p.transition.iter_mut().for_each(|t| *t = 0.0);
        let seq = random_seq(6, 2, &mut rng);
        let e = p.emissions(&refs(&seq));
        let want: Vec<usize> = e.iter().map(|row| super::super::argmax(row)).collect();
        assert_eq!(viterbi_decode(&p, &refs(&seq)), want);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let seq = random_seq(3, 2, &mut rng);
        let data = LabeledDataset::from_sequences(vec![(seq, vec![0, 1, 1])], 2).unwrap();
        let theta: Vec<f64> = (0..CrfParams::zeros(2, 2).n_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut g = vec![0.0; theta.len()];
        objective(&theta, &data, 1.0, &mut g);
        let h = 1e-5;
        let mut scratch = vec![0.0; theta.len()];
        for i in 0..theta.len() {
            let mut tp = theta.clone();
            tp[i] += h;
            let fp = objective(&tp, &data, 1.0, &mut scratch);
            tp[i] -= 2.0 * h;
            let fm = objective(&tp, &data, 1.0, &mut scratch);
            let fd = (fp - fm) / (2.0 * h);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-8);
            assert!(rel < 1e-4, "param {i}: analytic {} vs numeric {fd}", g[i]);
        }
    }

    #[test]
    fn training_is_monotone_and_fits_separable_sequence() {
        // one recording, classes separated along the first dimension
        let labels: Vec<usize> = (0..30).map(|i| (i / 3) % 3).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<Vec<f64>> = labels
            .iter()
            .map(|&y| vec![y as f64 * 3.0 - 3.0 + rng.gen_range(-0.3..0.3), rng.gen_range(-1.0..1.0)])
            .collect();
        let data = LabeledDataset::from_sequences(vec![(xs.clone(), labels.clone())], 3).unwrap();
        let (p, report) = train_crf(&data, &CrfConfig::default()).unwrap();
        assert!(report.iterations <= 100);
        assert!(report.values.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(viterbi_decode(&p, &refs(&xs)), labels);
    }
}

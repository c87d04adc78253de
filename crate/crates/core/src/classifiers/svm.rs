//! One-vs-one RBF support vector machines trained by SMO with
//! second-order working-set selection.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmParams {
    pub c: f64,
    pub sigma: f64,
    /// KKT violation tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 100.0,
            sigma: 12.0790,
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

/// `exp(-‖x − y‖² / (2σ²))`.
pub fn rbf_kernel(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// Class `pos` (label +1) against class `neg` (label −1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub pos: usize,
    pub neg: usize,
    /// Indices into [`SvmModel::support`] with their `α·y` coefficients.
    pub coef: Vec<(usize, f64)>,
    pub bias: f64,
    /// Full dual vector over this pair's training points, kept for inspection.
    pub alpha: Vec<f64>,
    pub y: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub sigma: f64,
    pub c: f64,
    pub n_classes: usize,
    /// Support vectors shared by all pairs.
    pub support: Vec<Vec<f64>>,
    pub machines: Vec<BinarySvm>,
}

impl SvmModel {
    fn kernels(&self, x: &[f64]) -> Vec<f64> {
        self.support.iter().map(|s| rbf_kernel(s, x, self.sigma)).collect()
    }

    /// Decision value of every pairwise machine, in machine order.
    pub fn decision_values(&self, x: &[f64]) -> Vec<f64> {
        let k = self.kernels(x);
        self.machines
            .iter()
            .map(|m| m.coef.iter().map(|&(s, a)| a * k[s]).sum::<f64>() + m.bias)
            .collect()
    }

    /// Pairwise voting; a zero decision value votes for the lower class and
    /// vote ties go to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        for (m, f) in self.machines.iter().zip(self.decision_values(x)) {
            let winner = if f > 0.0 || (f == 0.0 && m.pos < m.neg) { m.pos } else { m.neg };
            votes[winner] += 1;
        }
        let mut best = 0;
        for c in 1..votes.len() {
            if votes[c] > votes[best] {
                best = c;
            }
        }
        best
    }
}

pub fn train_svm(data: &LabeledDataset, params: &SvmParams) -> Result<SvmModel> {
    if !(params.c > 0.0 && params.sigma > 0.0 && params.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("svm parameters {params:?}")));
    }
    let present: Vec<usize> = data
        .class_counts()
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .map(|(c, _)| c)
        .collect();
    if present.len() < 2 {
        return Err(Error::SingleClass);
    }
    let mut pairs = Vec::new();
    for (i, &a) in present.iter().enumerate() {
        for &b in &present[i + 1..] {
            pairs.push((a, b));
        }
    }
    let solved = crate::par::map(&pairs, |&(a, b)| {
        let idx: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == a || data.labels[i] == b).collect();
        let y: Vec<f64> = idx.iter().map(|&i| if data.labels[i] == a { 1.0 } else { -1.0 }).collect();
        let xs: Vec<&[f64]> = idx.iter().map(|&i| data.vectors[i].as_slice()).collect();
        let sol = smo(&xs, &y, params);
        (a, b, idx, y, sol)
    });

    let mut support = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    let mut machines = Vec::with_capacity(solved.len());
    for (a, b, idx, y, sol) in solved {
        let mut coef = Vec::new();
        for (j, &i) in idx.iter().enumerate() {
            if sol.alpha[j] > 0.0 {
                let s = *slot.entry(i).or_insert_with(|| {
                    support.push(data.vectors[i].clone());
                    support.len() - 1
                });
                coef.push((s, sol.alpha[j] * y[j]));
            }
        }
        machines.push(BinarySvm {
            pos: a,
            neg: b,
            coef,
            bias: -sol.rho,
            alpha: sol.alpha,
            y,
            iterations: sol.iterations,
        });
    }
    Ok(SvmModel {
        sigma: params.sigma,
        c: params.c,
        n_classes: data.n_classes,
        support,
        machines,
    })
}

struct Solution {
    alpha: Vec<f64>,
    rho: f64,
    iterations: usize,
}

/// Kernel rows computed on first use.
struct KernelRows<'a> {
    x: &'a [&'a [f64]],
    sigma: f64,
    rows: Vec<Option<Vec<f64>>>,
}

impl<'a> KernelRows<'a> {
    fn row(&mut self, i: usize) -> &[f64] {
        if self.rows[i].is_none() {
            let xi = self.x[i];
            self.rows[i] = Some(self.x.iter().map(|xj| rbf_kernel(xi, xj, self.sigma)).collect());
        }
        self.rows[i].as_deref().expect("row just filled")
    }
}

const TAU: f64 = 1e-12;

/// Dual `min ½αᵀQα − Σα` s.t. `0 ≤ α ≤ C`, `yᵀα = 0`, with `Q_ij = y_i y_j K_ij`.
fn smo(x: &[&[f64]], y: &[f64], p: &SvmParams) -> Solution {
    let n = x.len();
    let c = p.c;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut k = KernelRows {
        x,
        sigma: p.sigma,
        rows: vec![None; n],
    };
    let up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    while iterations < p.max_iter {
        // i: maximal violating index in I_up
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        for t in 0..n {
            if up(alpha[t], y[t]) && -y[t] * grad[t] > gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        if i == usize::MAX {
            break;
        }
        let ki = k.row(i).to_vec();
        // j: second-order choice in I_low
        let mut j = usize::MAX;
        let mut gmin = f64::INFINITY;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            let b = gmax - v;
            if b > 0.0 {
                // K(x, x) = 1 for the RBF kernel
                let a = (ki[i] + 1.0 - 2.0 * ki[t]).max(TAU);
                let obj = -(b * b) / a;
                if obj < best {
                    best = obj;
                    j = t;
                }
            }
        }
        if gmax - gmin < p.tol || j == usize::MAX {
            break;
        }
        iterations += 1;
        let kj = k.row(j).to_vec();
        let (ai_old, aj_old) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (ki[i] + kj[j] - 2.0 * ki[j]).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (ki[i] + kj[j] - 2.0 * ki[j]).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai_old, alpha[j] - aj_old);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
    }

    // rho from free vectors, else the midpoint of the feasible interval
    let (mut ub, mut lb, mut sum, mut n_free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum += yg;
        }
    }
    let rho = if n_free > 0 { sum / n_free as f64 } else { (ub + lb) / 2.0 };
    Solution { alpha, rho, iterations }
}

//! Single-layer unidirectional LSTM with a per-position softmax output,
//! trained by backpropagation through time and mini-batch SGD.
//!
//! With `delay = d` the network reads `d` extra zero inputs after the last
//! unit and emits the label of unit `i` at step `i + d`, so each decision may
//! look `d` units ahead.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LstmParams {
    pub hidden: usize,
    /// Target delay in units.
    pub delay: usize,
    /// Minimum positions per mini-batch; whole sequences are never split.
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Global gradient-norm clip.
    pub clip: f64,
    /// Weights start uniform in `[-init_range, init_range]`.
    pub init_range: f64,
    pub forget_bias: f64,
}

impl Default for LstmParams {
    fn default() -> Self {
        Self {
            hidden: 128,
            delay: 0,
            batch: 128,
            epochs: 200,
            lr: 0.1,
            clip: 5.0,
            init_range: 0.08,
            forget_bias: 1.0,
        }
    }
}

/// Parameters stored flat: `Wx (4H×D)`, `Wh (4H×H)`, `b (4H)`, `Wy (K×H)`, `by (K)`.
/// Gate blocks are ordered input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub dim: usize,
    pub hidden: usize,
    pub n_classes: usize,
    pub delay: usize,
    pub theta: Vec<f64>,
}

struct Offsets {
    wx: usize,
    wh: usize,
    b: usize,
    wy: usize,
    by: usize,
    end: usize,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out += m · v` for a row-major `rows × v.len()` matrix.
fn matvec_add(m: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = v.len();
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += mᵀ · v`.
fn matvec_t_add(m: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (row, &s) in m.chunks_exact(cols).zip(v) {
        if s != 0.0 {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * s;
            }
        }
    }
}

/// `g += u ⊗ v`.
fn outer_add(g: &mut [f64], u: &[f64], v: &[f64]) {
    let cols = v.len();
    for (row, &s) in g.chunks_exact_mut(cols).zip(u) {
        if s != 0.0 {
            for (o, b) in row.iter_mut().zip(v) {
                *o += s * b;
            }
        }
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

struct Step {
    x: Vec<f64>,
    /// Activated gates, `4H`.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

impl LstmModel {
    pub fn new(dim: usize, hidden: usize, n_classes: usize, delay: usize) -> Self {
        let mut m = Self {
            dim,
            hidden,
            n_classes,
            delay,
            theta: Vec::new(),
        };
        m.theta = vec![0.0; m.offsets().end];
        m
    }

    fn offsets(&self) -> Offsets {
        let (d, h, k) = (self.dim, self.hidden, self.n_classes);
        let wx = 0;
        let wh = wx + 4 * h * d;
        let b = wh + 4 * h * h;
        let wy = b + 4 * h;
        let by = wy + k * h;
        Offsets {
            wx,
            wh,
            b,
            wy,
            by,
            end: by + k,
        }
    }

    fn init(&mut self, p: &LstmParams, rng: &mut ChaCha8Rng) {
        let o = self.offsets();
        for (i, v) in self.theta.iter_mut().enumerate() {
            *v = if (o.b..o.wy).contains(&i) || i >= o.by {
                0.0
            } else {
                rng.gen_range(-p.init_range..=p.init_range)
            };
        }
        let h = self.hidden;
        self.theta[o.b + h..o.b + 2 * h].iter_mut().for_each(|v| *v = p.forget_bias);
    }

    fn forward(&self, theta: &[f64], xs: &[&[f64]]) -> (Vec<Step>, Vec<Vec<f64>>) {
        let o = self.offsets();
        let h = self.hidden;
        let steps = xs.len() + self.delay;
        let mut out = Vec::with_capacity(steps);
        let mut probs = Vec::with_capacity(xs.len());
        let zero_x = vec![0.0; self.dim];
        let (mut h_prev, mut c_prev) = (vec![0.0; h], vec![0.0; h]);
        for t in 0..steps {
            let x = if t < xs.len() { xs[t].to_vec() } else { zero_x.clone() };
            let mut z = theta[o.b..o.wy].to_vec();
            matvec_add(&theta[o.wx..o.wh], &x, &mut z);
            matvec_add(&theta[o.wh..o.b], &h_prev, &mut z);
            for (j, v) in z.iter_mut().enumerate() {
                *v = if (2 * h..3 * h).contains(&j) { v.tanh() } else { sigmoid(*v) };
            }
            let (ig, rest) = z.split_at(h);
            let (fg, rest) = rest.split_at(h);
            let (gg, og) = rest.split_at(h);
            let c: Vec<f64> = (0..h).map(|j| fg[j] * c_prev[j] + ig[j] * gg[j]).collect();
            let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
            let hv: Vec<f64> = (0..h).map(|j| og[j] * tanh_c[j]).collect();
            if t >= self.delay {
                let mut logits = theta[o.by..o.end].to_vec();
                matvec_add(&theta[o.wy..o.by], &hv, &mut logits);
                probs.push(softmax(&logits));
            }
            h_prev.clone_from(&hv);
            c_prev.clone_from(&c);
            out.push(Step {
                x,
                gates: z,
                c,
                tanh_c,
                h: hv,
            });
        }
        (out, probs)
    }

    /// Class probabilities per unit.
    pub fn probabilities(&self, xs: &[&[f64]]) -> Vec<Vec<f64>> {
        self.forward(&self.theta, xs).1
    }

    /// Most probable class per unit, lowest index on ties.
    pub fn predict_sequence(&self, xs: &[&[f64]]) -> Vec<usize> {
        self.probabilities(xs).iter().map(|p| super::argmax(p)).collect()
    }

    /// Cross-entropy summed over the sequence and divided by `norm`;
    /// the matching gradient is added into `grad`.
    pub fn loss_grad(&self, theta: &[f64], xs: &[&[f64]], labels: &[usize], norm: f64, grad: &mut [f64]) -> f64 {
        let o = self.offsets();
        let h = self.hidden;
        let (steps, probs) = self.forward(theta, xs);
        let mut loss = 0.0;
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let zeros = vec![0.0; h];
        for t in (0..steps.len()).rev() {
            let s = &steps[t];
            let mut dh = std::mem::replace(&mut dh_next, vec![0.0; h]);
            if t >= self.delay {
                let i = t - self.delay;
                let p = &probs[i];
                let pl = p[labels[i]];
                // f64::max would swallow a NaN here
                loss -= if pl.is_nan() { pl } else { pl.max(1e-300).ln() } / norm;
                let mut dlogits: Vec<f64> = p.iter().map(|v| v / norm).collect();
                dlogits[labels[i]] -= 1.0 / norm;
                outer_add(&mut grad[o.wy..o.by], &dlogits, &s.h);
                for (g, d) in grad[o.by..o.end].iter_mut().zip(&dlogits) {
                    *g += d;
                }
                matvec_t_add(&theta[o.wy..o.by], &dlogits, &mut dh);
            }
            let c_prev = if t > 0 { &steps[t - 1].c } else { &zeros };
            let h_prev = if t > 0 { &steps[t - 1].h } else { &zeros };
            let (ig, fg, gg, og) = (&s.gates[..h], &s.gates[h..2 * h], &s.gates[2 * h..3 * h], &s.gates[3 * h..]);
            let mut dz = vec![0.0; 4 * h];
            for j in 0..h {
                let d_o = dh[j] * s.tanh_c[j];
                let dc = dc_next[j] + dh[j] * og[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]);
                dz[j] = dc * gg[j] * ig[j] * (1.0 - ig[j]);
                dz[h + j] = dc * c_prev[j] * fg[j] * (1.0 - fg[j]);
                dz[2 * h + j] = dc * ig[j] * (1.0 - gg[j] * gg[j]);
                dz[3 * h + j] = d_o * og[j] * (1.0 - og[j]);
                dc_next[j] = dc * fg[j];
            }
            outer_add(&mut grad[o.wx..o.wh], &dz, &s.x);
            outer_add(&mut grad[o.wh..o.b], &dz, h_prev);
            for (g, d) in grad[o.b..o.wy].iter_mut().zip(&dz) {
                *g += d;
            }
            matvec_t_add(&theta[o.wh..o.b], &dz, &mut dh_next);
        }
        loss
    }
}

/// Mean cross-entropy over every position of `seqs` and its gradient.
fn batch_loss_grad(model: &LstmModel, theta: &[f64], data: &LabeledDataset, seqs: &[usize], grad: &mut [f64]) -> f64 {
    let norm = seqs.iter().map(|&s| data.sequences[s].len()).sum::<usize>().max(1) as f64;
    let parts = crate::par::map(seqs, |&s| {
        let seq = &data.sequences[s];
        let xs: Vec<&[f64]> = seq.iter().map(|&i| data.vectors[i].as_slice()).collect();
        let ys: Vec<usize> = seq.iter().map(|&i| data.labels[i]).collect();
        let mut g = vec![0.0; theta.len()];
        let l = model.loss_grad(theta, &xs, &ys, norm, &mut g);
        (l, g)
    });
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    loss
}

/// Returns the trained model and the number of epochs run.
pub fn train_lstm(data: &LabeledDataset, p: &LstmParams, seed: u64) -> Result<(LstmModel, usize)> {
    if data.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if p.hidden == 0 || p.batch == 0 || !(p.lr > 0.0) || !(p.clip > 0.0) {
        return Err(Error::InvalidParameter(format!("lstm parameters {p:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = LstmModel::new(data.dim, p.hidden, data.n_classes, p.delay);
    model.init(p, &mut rng);
    let mut order: Vec<usize> = (0..data.sequences.len()).filter(|&s| !data.sequences[s].is_empty()).collect();
    let mut grad = vec![0.0; model.theta.len()];
    for epoch in 0..p.epochs {
        order.shuffle(&mut rng);
        let mut start = 0;
        while start < order.len() {
            let mut end = start;
            let mut positions = 0;
            while end < order.len() && positions < p.batch {
                positions += data.sequences[order[end]].len();
                end += 1;
            }
            let theta = model.theta.clone();
            let loss = batch_loss_grad(&model, &theta, data, &order[start..end], &mut grad);
            if !loss.is_finite() {
                return Err(Error::Diverged { seed, epoch });
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            let scale = if norm > p.clip { p.clip / norm } else { 1.0 };
            for (w, g) in model.theta.iter_mut().zip(&grad) {
                *w -= p.lr * scale * g;
            }
            start = end;
        }
    }
    Ok((model, p.epochs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_data(n_seq: usize, len: usize, dim: usize, n_classes: usize) -> LabeledDataset {
        let groups = (0..n_seq)
            .map(|s| {
                let c = s % n_classes;
                let x: Vec<f64> = (0..dim).map(|j| if j == c { 1.0 } else { 0.0 }).collect();
                (vec![x; len], vec![c; len])
            })
            .collect();
        LabeledDataset::from_sequences(groups, n_classes).unwrap()
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut m = LstmModel::new(3, 6, 5, 2);
        m.init(&LstmParams::default(), &mut rng);
        m.theta.iter_mut().for_each(|v| *v *= 20.0);
        let xs: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64, -(i as f64), 0.5]).collect();
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let p = m.probabilities(&refs);
        assert_eq!(p.len(), 7);
        for row in p {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn bptt_matches_finite_differences() {
        for delay in [0, 1] {
            let mut rng = ChaCha8Rng::seed_from_u64(12 + delay as u64);
            let mut m = LstmModel::new(2, 2, 3, delay);
            for v in m.theta.iter_mut() {
                *v = rng.gen_range(-0.8..0.8);
            }
            let xs = [vec![0.5, -1.0], vec![1.5, 0.2], vec![-0.3, 0.9]];
            let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
            let labels = [2, 0, 1];
            let theta = m.theta.clone();
            let mut g = vec![0.0; theta.len()];
            m.loss_grad(&theta, &refs, &labels, 3.0, &mut g);
            let h = 1e-5;
            let mut scratch = vec![0.0; theta.len()];
            for i in 0..theta.len() {
                let mut tp = theta.clone();
                tp[i] += h;
                let fp = m.loss_grad(&tp, &refs, &labels, 3.0, &mut scratch);
                tp[i] -= 2.0 * h;
                let fm = m.loss_grad(&tp, &refs, &labels, 3.0, &mut scratch);
                let fd = (fp - fm) / (2.0 * h);
                let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-7);
                assert!(rel < 1e-4, "delay {delay} param {i}: {} vs {fd}", g[i]);
            }
        }
    }

    #[test]
    fn overfits_constant_toy() {
        let data = toy_data(20, 6, 5, 5);
        let (m, epochs) = train_lstm(&data, &LstmParams::default(), 1).unwrap();
        assert_eq!(epochs, 200);
        let mut correct = 0;
        for seq in &data.sequences {
            let xs: Vec<&[f64]> = seq.iter().map(|&i| data.vectors[i].as_slice()).collect();
            let pred = m.predict_sequence(&xs);
            correct += seq.iter().zip(pred).filter(|(&i, p)| data.labels[i] == *p).count();
        }
        assert!(correct as f64 / data.len() as f64 >= 0.99, "{correct}/{}", data.len());
    }

    #[test]
    fn deterministic_per_seed() {
        let data = toy_data(6, 3, 3, 3);
        let p = LstmParams {
            hidden: 5,
            epochs: 5,
            ..Default::default()
        };
        let (a, _) = train_lstm(&data, &p, 9).unwrap();
        let (b, _) = train_lstm(&data, &p, 9).unwrap();
        assert_eq!(a, b);
        let (c, _) = train_lstm(&data, &p, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn divergence_is_reported() {
        let mut data = toy_data(4, 3, 2, 2);
        data.vectors[0][0] = f64::NAN;
        let p = LstmParams {
            hidden: 3,
            epochs: 3,
            ..Default::default()
        };
        assert!(matches!(train_lstm(&data, &p, 77), Err(Error::Diverged { seed: 77, epoch: 0 })));
    }
}

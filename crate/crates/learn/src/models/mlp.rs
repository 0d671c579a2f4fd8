//! Multi-layer perceptron: sigmoid hidden layers, linear output, trained by
//! per-sample SGD with momentum.

use coopra_core::FusedDataset;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelSpec, Regressor, Standardizer};
use crate::error::{LearnError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: vec![15, 15],
            learning_rate: 0.1,
            momentum: 0.001,
            epochs: 500,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Fully connected network with parameters in one flat vector. Layer `l`
/// stores its weights input-major (`w[i * out + o]`) followed by `out`
/// biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Net {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

impl Net {
    pub fn n_params(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    /// Weights and biases uniform in ±1/√fan_in.
    pub fn init(sizes: &[usize], rng: &mut impl Rng) -> Net {
        let mut params = Vec::with_capacity(Self::n_params(sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[1] * (w[0] + 1) {
                params.push(rng.random_range(-bound..=bound));
            }
        }
        Net {
            sizes: sizes.to_vec(),
            params,
        }
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut off = vec![0];
        for w in self.sizes.windows(2) {
            off.push(off.last().unwrap() + w[1] * (w[0] + 1));
        }
        off
    }

    /// Forward pass storing every layer's activations in `acts`
    /// (`acts[0]` is the input). Returns the scalar output.
    fn forward(&self, offsets: &[usize], x: &[f64], acts: &mut [Vec<f64>]) -> f64 {
        acts[0].copy_from_slice(x);
        let last = self.sizes.len() - 2;
        for l in 0..=last {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offsets[l]..offsets[l] + n_out * n_in];
            let b = &self.params[offsets[l] + n_out * n_in..offsets[l + 1]];
            let (prev, next) = acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut next[0][..n_out];
            out.copy_from_slice(b);
            for (i, &a) in input.iter().enumerate() {
                for (z, wi) in out.iter_mut().zip(&w[i * n_out..(i + 1) * n_out]) {
                    *z += a * wi;
                }
            }
            if l < last {
                out.iter_mut().for_each(|z| *z = sigmoid(*z));
            }
        }
        acts[last + 1][0]
    }

    /// Backpropagates ½(f(x) − y)² and hands every parameter, its slot in
    /// `aux` (same layout as `params`) and its partial derivative to `sink`,
    /// layer by layer from the output. A layer's deltas are propagated before
    /// its parameters reach the sink, so the sink may update them in place.
    /// Returns the sample loss.
    #[allow(clippy::too_many_arguments)]
    fn backprop(
        sizes: &[usize],
        params: &mut [f64],
        aux: &mut [f64],
        offsets: &[usize],
        out: f64,
        y: f64,
        acts: &[Vec<f64>],
        deltas: &mut [Vec<f64>],
        mut sink: impl FnMut(&mut f64, &mut f64, f64),
    ) -> f64 {
        let err = out - y;
        let last = sizes.len() - 2;
        deltas[last + 1][0] = err;
        for l in (0..=last).rev() {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let base = offsets[l];
            let (w, b) = params[base..offsets[l + 1]].split_at_mut(n_out * n_in);
            let (aw, ab) = aux[base..offsets[l + 1]].split_at_mut(n_out * n_in);
            let (dprev, dnext) = deltas.split_at_mut(l + 1);
            let delta = &dnext[0][..n_out];
            let input = &acts[l];
            if l > 0 {
                for (i, (dp, &a)) in dprev[l].iter_mut().zip(input).enumerate() {
                    let s: f64 = w[i * n_out..(i + 1) * n_out].iter().zip(delta).map(|(w, d)| w * d).sum();
                    *dp = s * a * (1.0 - a);
                }
            }
            for ((&a, wi), ai) in input.iter().zip(w.chunks_exact_mut(n_out)).zip(aw.chunks_exact_mut(n_out)) {
                for ((p, x), d) in wi.iter_mut().zip(ai).zip(delta) {
                    sink(p, x, a * d);
                }
            }
            for ((p, x), &d) in b.iter_mut().zip(ab).zip(delta) {
                sink(p, x, d);
            }
        }
        0.5 * err * err
    }

    fn buffers(&self) -> Vec<Vec<f64>> {
        self.sizes.iter().map(|&s| vec![0.0; s]).collect()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut acts = self.buffers();
        self.forward(&self.layer_offsets(), x, &mut acts)
    }

    /// Summed loss ½Σ(f(xᵢ) − yᵢ)² and its gradient over the flat parameters.
    pub fn loss_and_gradient(&self, xs: &[Vec<f64>], ys: &[f64]) -> (f64, Vec<f64>) {
        let offsets = self.layer_offsets();
        let mut acts = self.buffers();
        let mut deltas = self.buffers();
        let mut params = self.params.clone();
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let out = self.forward(&offsets, x, &mut acts);
            loss += Self::backprop(&self.sizes, &mut params, &mut grad, &offsets, out, y, &acts, &mut deltas, |_, acc, g| {
                *acc += g
            });
        }
        (loss, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub standardizer: Standardizer,
    pub y_min: f64,
    pub y_range: f64,
    pub net: Net,
}

impl MlpModel {
    pub fn fit(rows: &[Vec<f64>], y: &[f64], params: &MlpParams, seed: u64) -> Result<MlpModel> {
        if rows.is_empty() {
            return Err(LearnError::EmptyDataset);
        }
        if params.hidden.iter().any(|&h| h == 0) || !(params.learning_rate > 0.0) || !(params.momentum >= 0.0) {
            return Err(LearnError::Hyperparameter(
                "hidden sizes must be >= 1, learning_rate > 0 and momentum >= 0".into(),
            ));
        }
        let standardizer = Standardizer::fit(rows);
        let xs: Vec<Vec<f64>> = rows.iter().map(|r| standardizer.transform(r)).collect();
        let (lo, hi) = y.iter().fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
        let y_range = if hi > lo { hi - lo } else { 1.0 };
        let ys: Vec<f64> = y.iter().map(|v| (v - lo) / y_range).collect();

        let mut sizes = vec![rows[0].len()];
        sizes.extend_from_slice(&params.hidden);
        sizes.push(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Net::init(&sizes, &mut rng);
        let offsets = net.layer_offsets();
        let mut acts = net.buffers();
        let mut deltas = net.buffers();
        let mut velocity = vec![0.0; net.params.len()];
        let mut order: Vec<usize> = (0..xs.len()).collect();
        for epoch in 0..params.epochs {
            order.shuffle(&mut rng);
            let mut loss = 0.0;
            for &i in &order {
                let out = net.forward(&offsets, &xs[i], &mut acts);
                let (lr, momentum) = (params.learning_rate, params.momentum);
                loss += Net::backprop(&net.sizes, &mut net.params, &mut velocity, &offsets, out, ys[i], &acts, &mut deltas, |p, v, g| {
                    *v = momentum * *v - lr * g;
                    *p += *v;
                });
            }
            let loss = loss / xs.len() as f64;
            if !loss.is_finite() {
                return Err(LearnError::Diverged { epoch, loss });
            }
        }
        Ok(MlpModel {
            standardizer,
            y_min: lo,
            y_range,
            net,
        })
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let x = self.standardizer.transform(row);
        self.y_min + self.y_range * self.net.predict(&x)
    }
}

pub fn fit_mlp(dataset: &FusedDataset, params: &MlpParams, seed: u64) -> Result<Regressor> {
    ModelSpec::Mlp(params.clone()).fit(dataset, seed)
}

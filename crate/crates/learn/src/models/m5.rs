//! M5 model tree: standard-deviation-reduction splits, linear models at the
//! nodes, error-based pruning and smoothing along the root path.

use coopra_core::FusedDataset;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ModelSpec, Regressor};
use crate::error::{LearnError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct M5Params {
    pub min_leaf: usize,
    pub smoothing_k: f64,
    pub prune: bool,
    pub smooth: bool,
}

impl Default for M5Params {
    fn default() -> Self {
        M5Params {
            min_leaf: 4,
            smoothing_k: 15.0,
            prune: true,
            smooth: true,
        }
    }
}

/// Nodes are not split once their deviation falls below this share of the
/// root's.
const MIN_SD_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub features: Vec<usize>,
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    fn constant(value: f64) -> Self {
        LinearModel {
            features: Vec::new(),
            coef: Vec::new(),
            intercept: value,
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + self.features.iter().zip(&self.coef).map(|(&j, c)| c * row[j]).sum::<f64>()
    }

    fn n_params(&self) -> usize {
        self.coef.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M5Node {
    pub n: usize,
    pub model: LinearModel,
    /// `(feature, threshold, left, right)`; `None` for leaves.
    pub split: Option<(usize, f64, usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M5Model {
    pub nodes: Vec<M5Node>,
    pub smoothing_k: f64,
    pub smooth: bool,
    /// Node regressions that were singular and fell back to the node mean.
    pub singular_fallbacks: usize,
}

fn sd(y: &[f64], idx: &[usize]) -> f64 {
    let n = idx.len() as f64;
    let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / n;
    (idx.iter().map(|&i| (y[i] - mean).powi(2)).sum::<f64>() / n).sqrt()
}

struct Grower<'a> {
    rows: &'a [Vec<f64>],
    y: &'a [f64],
    params: &'a M5Params,
    min_sd: f64,
    nodes: Vec<M5Node>,
    /// Split features used in each node's subtree.
    subtree_features: Vec<Vec<usize>>,
    fallbacks: usize,
}

impl Grower<'_> {
    /// Best SDR split of `idx`: (feature, threshold, sdr).
    fn best_split(&self, idx: &[usize]) -> Option<(usize, f64, f64)> {
        let n = idx.len();
        let base = sd(self.y, idx);
        let p = self.rows[0].len();
        let mut best: Option<(usize, f64, f64)> = None;
        let mut order = idx.to_vec();
        for j in 0..p {
            order.sort_by(|&a, &b| self.rows[a][j].total_cmp(&self.rows[b][j]).then(a.cmp(&b)));
            let total: f64 = order.iter().map(|&i| self.y[i]).sum();
            let total_sq: f64 = order.iter().map(|&i| self.y[i] * self.y[i]).sum();
            let (mut s, mut sq) = (0.0, 0.0);
            for k in 0..n - 1 {
                let yi = self.y[order[k]];
                s += yi;
                sq += yi * yi;
                let nl = k + 1;
                let nr = n - nl;
                let (a, b) = (self.rows[order[k]][j], self.rows[order[k + 1]][j]);
                if a == b || nl < self.params.min_leaf || nr < self.params.min_leaf {
                    continue;
                }
                let var = |s: f64, sq: f64, m: usize| (sq / m as f64 - (s / m as f64).powi(2)).max(0.0);
                let sdl = var(s, sq, nl).sqrt();
                let sdr_ = var(total - s, total_sq - sq, nr).sqrt();
                let sdr = base - (nl as f64 * sdl + nr as f64 * sdr_) / n as f64;
                if best.is_none_or(|(_, _, bs)| sdr > bs) {
                    let mid = 0.5 * (a + b);
                    best = Some((j, if mid < b { mid } else { a }, sdr));
                }
            }
        }
        best.filter(|&(_, _, sdr)| sdr > 0.0)
    }

    fn grow(&mut self, idx: Vec<usize>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(M5Node {
            n: idx.len(),
            model: LinearModel::constant(0.0),
            split: None,
        });
        self.subtree_features.push(Vec::new());

        let splittable = idx.len() >= 2 * self.params.min_leaf && sd(self.y, &idx) > self.min_sd;
        let split = if splittable { self.best_split(&idx) } else { None };
        let mut features = Vec::new();
        if let Some((j, thr, _)) = split {
            let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.rows[i][j] <= thr);
            let left = self.grow(l);
            let right = self.grow(r);
            self.nodes[id].split = Some((j, thr, left, right));
            features.push(j);
            features.extend_from_slice(&self.subtree_features[left]);
            features.extend_from_slice(&self.subtree_features[right]);
            features.sort_unstable();
            features.dedup();
        }
        let (model, singular) = fit_linear(self.rows, self.y, &idx, &features);
        self.fallbacks += usize::from(singular);
        self.nodes[id].model = model;
        self.subtree_features[id] = features;
        id
    }
}

/// Least squares on `features` over the samples `idx`. Columns constant on
/// the node are dropped. Returns the model and whether the fit was singular
/// (in which case the model is the node mean).
fn fit_linear(rows: &[Vec<f64>], y: &[f64], idx: &[usize], features: &[usize]) -> (LinearModel, bool) {
    let n = idx.len();
    let ymean = idx.iter().map(|&i| y[i]).sum::<f64>() / n as f64;
    let mut cols = Vec::new();
    let mut means = Vec::new();
    let mut scales = Vec::new();
    for &j in features {
        let m = idx.iter().map(|&i| rows[i][j]).sum::<f64>() / n as f64;
        let s = (idx.iter().map(|&i| (rows[i][j] - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        if s > 1e-12 * m.abs().max(1.0) {
            cols.push(j);
            means.push(m);
            scales.push(s);
        }
    }
    if cols.is_empty() {
        return (LinearModel::constant(ymean), false);
    }
    if n <= cols.len() + 1 {
        return (LinearModel::constant(ymean), true);
    }
    let a = DMatrix::from_fn(n, cols.len(), |r, c| (rows[idx[r]][cols[c]] - means[c]) / scales[c]);
    let b = DVector::from_iterator(n, idx.iter().map(|&i| y[i] - ymean));
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.iter().any(|&s| !(s > 1e-9 * smax)) {
        return (LinearModel::constant(ymean), true);
    }
    let Ok(beta) = svd.solve(&b, 0.0) else {
        return (LinearModel::constant(ymean), true);
    };
    let coef: Vec<f64> = beta.iter().zip(&scales).map(|(b, s)| b / s).collect();
    let intercept = ymean - coef.iter().zip(&means).map(|(c, m)| c * m).sum::<f64>();
    if !intercept.is_finite() || coef.iter().any(|c| !c.is_finite()) {
        return (LinearModel::constant(ymean), true);
    }
    (
        LinearModel {
            features: cols,
            coef,
            intercept,
        },
        false,
    )
}

impl M5Model {
    pub fn fit(rows: &[Vec<f64>], y: &[f64], params: &M5Params) -> Result<M5Model> {
        if rows.is_empty() {
            return Err(LearnError::EmptyDataset);
        }
        if params.min_leaf == 0 || !(params.smoothing_k >= 0.0) {
            return Err(LearnError::Hyperparameter("min_leaf must be >= 1 and smoothing_k >= 0".into()));
        }
        let all: Vec<usize> = (0..rows.len()).collect();
        let mut g = Grower {
            rows,
            y,
            params,
            min_sd: MIN_SD_FRACTION * sd(y, &all),
            nodes: Vec::new(),
            subtree_features: Vec::new(),
            fallbacks: 0,
        };
        let root_samples = all.clone();
        g.grow(root_samples);
        let mut model = M5Model {
            nodes: g.nodes,
            smoothing_k: params.smoothing_k,
            smooth: params.smooth,
            singular_fallbacks: g.fallbacks,
        };
        if params.prune {
            // Error differences at rounding level count as ties, which go to
            // the simpler model.
            let tie = 1e-9 * sd(y, &all).max(f64::MIN_POSITIVE);
            model.prune(0, all, rows, y, tie);
            model.compact();
        }
        Ok(model)
    }

    /// Returns the pruned error estimate of the subtree at `id`, which
    /// holds the training samples `idx`.
    fn prune(&mut self, id: usize, idx: Vec<usize>, rows: &[Vec<f64>], y: &[f64], tie: f64) -> f64 {
        let model_err = estimated_error(&self.nodes[id].model, rows, y, &idx);
        let Some((f, t, l, r)) = self.nodes[id].split else {
            return model_err;
        };
        let (li, ri): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| rows[i][f] <= t);
        let (nl, nr) = (li.len() as f64, ri.len() as f64);
        let el = self.prune(l, li, rows, y, tie);
        let er = self.prune(r, ri, rows, y, tie);
        let subtree_err = (nl * el + nr * er) / (nl + nr);
        if model_err <= subtree_err + tie {
            self.nodes[id].split = None;
            model_err
        } else {
            subtree_err
        }
    }

    /// Drops nodes no longer reachable after pruning.
    fn compact(&mut self) {
        let mut keep = Vec::new();
        let mut stack = vec![0];
        while let Some(id) = stack.pop() {
            keep.push(id);
            if let Some((_, _, l, r)) = self.nodes[id].split {
                stack.push(r);
                stack.push(l);
            }
        }
        keep.sort_unstable();
        let mut remap = vec![usize::MAX; self.nodes.len()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let old = std::mem::take(&mut self.nodes);
        self.nodes = keep
            .iter()
            .map(|&i| {
                let mut node = old[i].clone();
                node.split = node.split.map(|(f, t, l, r)| (f, t, remap[l], remap[r]));
                node
            })
            .collect();
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut path = Vec::with_capacity(16);
        let mut id = 0;
        while let Some((f, t, l, r)) = self.nodes[id].split {
            path.push(id);
            id = if row[f] <= t { l } else { r };
        }
        let mut p = self.nodes[id].model.predict(row);
        if self.smooth {
            let k = self.smoothing_k;
            let mut child = id;
            for &parent in path.iter().rev() {
                let n = self.nodes[child].n as f64;
                p = (n * p + k * self.nodes[parent].model.predict(row)) / (n + k);
                child = parent;
            }
        }
        p
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.split.is_none()).count()
    }

    pub fn root_split(&self) -> Option<(usize, f64)> {
        self.nodes[0].split.map(|(f, t, _, _)| (f, t))
    }

    pub fn root_model(&self) -> &LinearModel {
        &self.nodes[0].model
    }
}

/// Mean absolute residual inflated by (n + ν) / (n − ν) for ν parameters.
fn estimated_error(model: &LinearModel, rows: &[Vec<f64>], y: &[f64], idx: &[usize]) -> f64 {
    let n = idx.len() as f64;
    let nu = model.n_params() as f64;
    let mae = idx.iter().map(|&i| (y[i] - model.predict(&rows[i])).abs()).sum::<f64>() / n;
    if n > nu {
        mae * (n + nu) / (n - nu)
    } else {
        mae * 10.0
    }
}

pub fn fit_m5(dataset: &FusedDataset, params: &M5Params) -> Result<Regressor> {
    ModelSpec::M5(params.clone()).fit(dataset, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_data_collapses_to_one_leaf() {
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 10.0]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 3.0 * r[0] + 1.0).collect();
        let m = M5Model::fit(&rows, &y, &M5Params::default()).unwrap();
        assert_eq!(m.n_leaves(), 1);
        let lm = m.root_model();
        assert!((lm.coef[0] - 3.0).abs() < 1e-6 && (lm.intercept - 1.0).abs() < 1e-6, "{lm:?}");
    }

    #[test]
    fn constant_labels_give_one_constant_leaf() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i % 5) as f64]).collect();
        let m = M5Model::fit(&rows, &[4.0; 30], &M5Params::default()).unwrap();
        assert_eq!(m.n_leaves(), 1);
        assert!(rows.iter().all(|r| m.predict_row(r) == 4.0));
    }

    #[test]
    fn collinear_columns_fall_back_without_failing() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..40).map(|i| if i < 20 { 0.0 } else { i as f64 }).collect();
        let m = M5Model::fit(&rows, &y, &M5Params::default()).unwrap();
        assert!(rows.iter().all(|r| m.predict_row(r).is_finite()));
    }
}

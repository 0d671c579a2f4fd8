//! ε-insensitive support-vector regression with an RBF kernel, solved by
//! SMO with second-order working-set selection.

use coopra_core::FusedDataset;
use serde::{Deserialize, Serialize};

use super::{ModelSpec, Regressor, Standardizer};
use crate::error::{LearnError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub tol: f64,
    /// Iteration cap; `None` means max(10⁷, 200·n).
    pub max_iter: Option<usize>,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams {
            c: 10.0,
            epsilon: 0.1,
            gamma: 0.1,
            tol: 1e-3,
            max_iter: None,
        }
    }
}

impl SvrParams {
    pub fn new(c: f64, epsilon: f64, gamma: f64) -> Self {
        SvrParams {
            c,
            epsilon,
            gamma,
            ..Self::default()
        }
    }
}

const TAU: f64 = 1e-12;

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Dual solution on (already transformed) inputs: `beta[i] = αᵢ − αᵢ*` and
/// the decision function f(x) = Σ βᵢ k(xᵢ, x) − ρ.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrSolution {
    pub beta: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
}

/// Runs SMO on inputs `x` and labels `z`.
pub fn solve(x: &[Vec<f64>], z: &[f64], params: &SvrParams) -> Result<SvrSolution> {
    let n = x.len();
    if n == 0 {
        return Err(LearnError::EmptyDataset);
    }
    if !(params.c > 0.0) || !(params.epsilon >= 0.0) || !(params.gamma > 0.0) || !(params.tol > 0.0) {
        return Err(LearnError::Hyperparameter(
            "SVR needs c > 0, epsilon >= 0, gamma > 0 and tol > 0".into(),
        ));
    }
    let c = params.c;
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = 1.0;
        for j in 0..i {
            let v = rbf(&x[i], &x[j], params.gamma);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let l = 2 * n;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let mut alpha = vec![0.0; l];
    let mut grad: Vec<f64> = (0..l)
        .map(|t| if t < n { params.epsilon - z[t] } else { params.epsilon + z[t - n] })
        .collect();
    let max_iter = params.max_iter.unwrap_or((200 * n).max(10_000_000));
    let mut iterations = 0;
    loop {
        // Maximal violating pair with second-order choice of j.
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..l {
            if t < n {
                if alpha[t] < c && -grad[t] >= gmax {
                    gmax = -grad[t];
                    i_sel = t;
                }
            } else if alpha[t] > 0.0 && grad[t] >= gmax {
                gmax = grad[t];
                i_sel = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut best_obj = f64::INFINITY;
        if i_sel != usize::MAX {
            let yi = sign(i_sel);
            let krow = &k[(i_sel % n) * n..(i_sel % n + 1) * n];
            for t in 0..l {
                let yt = sign(t);
                let q_it = yi * yt * krow[t % n];
                let (eligible, g, grad_diff, quad) = if t < n {
                    (alpha[t] > 0.0, grad[t], gmax + grad[t], 2.0 - 2.0 * yi * q_it)
                } else {
                    (alpha[t] < c, -grad[t], gmax - grad[t], 2.0 + 2.0 * yi * q_it)
                };
                if !eligible {
                    continue;
                }
                if g >= gmax2 {
                    gmax2 = g;
                }
                if grad_diff > 0.0 {
                    let quad = if quad > 0.0 { quad } else { TAU };
                    let obj = -grad_diff * grad_diff / quad;
                    if obj <= best_obj {
                        best_obj = obj;
                        j_sel = t;
                    }
                }
            }
        }
        let violation = gmax + gmax2;
        if j_sel == usize::MAX || violation < params.tol {
            break;
        }
        if iterations >= max_iter {
            return Err(LearnError::NotConverged { iterations, violation });
        }
        iterations += 1;

        let (i, j) = (i_sel, j_sel);
        let (yi, yj) = (sign(i), sign(j));
        let q_ij = yi * yj * k[(i % n) * n + j % n];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if yi != yj {
            let quad = (2.0 + 2.0 * q_ij).max(TAU);
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
            let quad = (2.0 - 2.0 * q_ij).max(TAU);
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
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        let (ki, kj) = (&k[(i % n) * n..(i % n + 1) * n], &k[(j % n) * n..(j % n + 1) * n]);
        let (ci, cj) = (yi * di, yj * dj);
        for t in 0..l {
            let yt = sign(t);
            grad[t] += yt * (ci * ki[t % n] + cj * kj[t % n]);
        }
    }

    let mut free_sum = 0.0;
    let mut n_free = 0usize;
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..l {
        let yt = sign(t);
        let yg = yt * grad[t];
        if alpha[t] >= c {
            if yt < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if yt > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            free_sum += yg;
        }
    }
    let rho = if n_free > 0 { free_sum / n_free as f64 } else { 0.5 * (ub + lb) };
    let beta = (0..n).map(|i| alpha[i] - alpha[i + n]).collect();
    Ok(SvrSolution { beta, rho, iterations })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub standardizer: Standardizer,
    pub gamma: f64,
    /// Standardized support vectors and their coefficients.
    pub support: Vec<Vec<f64>>,
    pub coef: Vec<f64>,
    pub rho: f64,
}

impl SvrModel {
    pub fn fit(rows: &[Vec<f64>], y: &[f64], params: &SvrParams) -> Result<SvrModel> {
        if rows.is_empty() {
            return Err(LearnError::EmptyDataset);
        }
        let standardizer = Standardizer::fit(rows);
        let x: Vec<Vec<f64>> = rows.iter().map(|r| standardizer.transform(r)).collect();
        let sol = solve(&x, y, params)?;
        let (support, coef) = x
            .into_iter()
            .zip(&sol.beta)
            .filter(|(_, b)| **b != 0.0)
            .map(|(r, b)| (r, *b))
            .unzip();
        Ok(SvrModel {
            standardizer,
            gamma: params.gamma,
            support,
            coef,
            rho: sol.rho,
        })
    }

    pub fn n_support(&self) -> usize {
        self.support.len()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let x = self.standardizer.transform(row);
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(s, b)| b * rbf(s, &x, self.gamma))
            .sum::<f64>()
            - self.rho
    }
}

pub fn fit_svr(dataset: &FusedDataset, params: &SvrParams) -> Result<Regressor> {
    ModelSpec::Svr(params.clone()).fit(dataset, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_inside_the_tube_give_no_support_vectors() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| 5.0 + 0.01 * (i % 3) as f64).collect();
        let m = SvrModel::fit(&rows, &y, &SvrParams::new(10.0, 0.1, 0.5)).unwrap();
        assert_eq!(m.n_support(), 0);
        assert!((m.predict_row(&[3.0]) - 5.01).abs() < 1e-12);
    }

    #[test]
    fn fits_a_smooth_curve() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64 / 10.0]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0].sin()).collect();
        let m = SvrModel::fit(&rows, &y, &SvrParams::new(100.0, 0.01, 1.0)).unwrap();
        for (r, v) in rows.iter().zip(&y) {
            assert!((m.predict_row(r) - v).abs() < 0.05);
        }
    }

    #[test]
    fn iteration_cap_reports_the_violation() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..30).map(|i| (i * i % 7) as f64).collect();
        let p = SvrParams {
            max_iter: Some(1),
            ..SvrParams::new(100.0, 0.01, 1.0)
        };
        assert!(matches!(SvrModel::fit(&rows, &y, &p), Err(LearnError::NotConverged { iterations: 1, .. })));
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let rows = vec![vec![0.0], vec![1.0]];
        for p in [SvrParams::new(0.0, 0.1, 1.0), SvrParams::new(1.0, -0.1, 1.0), SvrParams::new(1.0, 0.1, 0.0)] {
            assert!(matches!(SvrModel::fit(&rows, &[0.0, 1.0], &p), Err(LearnError::Hyperparameter(_))));
        }
    }
}

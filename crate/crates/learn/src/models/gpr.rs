//! One-dimensional Gaussian-process regression with an RBF kernel and
//! hyperparameters picked from grids by marginal likelihood.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{LearnError, Result};

const JITTER: f64 = 1e-8;
const Z95: f64 = 1.96;

/// Grids are in standardized units: x and y are scaled to unit variance
/// before fitting and the signal variance is fixed at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GprParams {
    pub noise_grid: Vec<f64>,
    pub lengthscale_grid: Vec<f64>,
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

impl Default for GprParams {
    fn default() -> Self {
        GprParams {
            noise_grid: log_space(1e-4, 2.0, 12),
            lengthscale_grid: log_space(0.05, 5.0, 10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprModel {
    pub x_mean: f64,
    pub x_scale: f64,
    pub y_mean: f64,
    pub y_scale: f64,
    pub noise: f64,
    pub lengthscale: f64,
    pub log_marginal_likelihood: f64,
    /// Standardized training inputs.
    pub x: Vec<f64>,
    /// (K + σ²I)⁻¹ y in standardized units.
    pub alpha: Vec<f64>,
    /// Lower Cholesky factor of K + σ²I, row-major.
    pub chol: Vec<f64>,
}

fn mean_scale(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
    (m, if sd > 1e-12 * m.abs().max(1.0) { sd } else { 1.0 })
}

fn kernel(a: f64, b: f64, ls: f64) -> f64 {
    (-0.5 * ((a - b) / ls).powi(2)).exp()
}

fn factor(x: &[f64], noise: f64, ls: f64) -> Option<Cholesky<f64, Dyn>> {
    let n = x.len();
    let k = DMatrix::from_fn(n, n, |i, j| kernel(x[i], x[j], ls) + if i == j { noise } else { 0.0 });
    k.clone().cholesky().or_else(|| {
        let mut k = k;
        for i in 0..n {
            k[(i, i)] += JITTER;
        }
        k.cholesky()
    })
}

impl GprModel {
    pub fn fit(x: &[f64], y: &[f64], params: &GprParams) -> Result<GprModel> {
        if x.len() != y.len() {
            return Err(LearnError::Contract(format!("{} inputs but {} labels", x.len(), y.len())));
        }
        if x.len() < 2 {
            return Err(LearnError::Contract("GPR needs at least two points".into()));
        }
        if params.noise_grid.is_empty()
            || params.lengthscale_grid.is_empty()
            || params.noise_grid.iter().any(|v| !(*v >= 0.0))
            || params.lengthscale_grid.iter().any(|v| !(*v > 0.0))
        {
            return Err(LearnError::Hyperparameter(
                "GPR grids must be non-empty with noise >= 0 and lengthscale > 0".into(),
            ));
        }
        let (x_mean, x_scale) = mean_scale(x);
        let (y_mean, y_scale) = mean_scale(y);
        let xs: Vec<f64> = x.iter().map(|v| (v - x_mean) / x_scale).collect();
        let ys = DVector::from_iterator(y.len(), y.iter().map(|v| (v - y_mean) / y_scale));
        let n = xs.len();
        let mut best: Option<(f64, f64, f64, Cholesky<f64, Dyn>, DVector<f64>)> = None;
        for &noise in &params.noise_grid {
            for &ls in &params.lengthscale_grid {
                let Some(ch) = factor(&xs, noise, ls) else {
                    continue;
                };
                let alpha = ch.solve(&ys);
                let log_det: f64 = ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
                let lml = -0.5 * ys.dot(&alpha) - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
                if lml.is_finite() && best.as_ref().is_none_or(|b| lml > b.0) {
                    best = Some((lml, noise, ls, ch, alpha));
                }
            }
        }
        let Some((lml, noise, ls, ch, alpha)) = best else {
            return Err(LearnError::Numeric("kernel matrix not positive definite for any grid cell".into()));
        };
        let l = ch.l();
        Ok(GprModel {
            x_mean,
            x_scale,
            y_mean,
            y_scale,
            noise,
            lengthscale: ls,
            log_marginal_likelihood: lml,
            x: xs,
            alpha: alpha.iter().copied().collect(),
            chol: (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| l[(i, j)]).collect(),
        })
    }

    /// Posterior mean and latent variance in standardized units.
    fn posterior(&self, x: f64) -> (f64, f64) {
        let xs = (x - self.x_mean) / self.x_scale;
        let n = self.x.len();
        let k: Vec<f64> = self.x.iter().map(|&xi| kernel(xi, xs, self.lengthscale)).collect();
        let mean = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        // Forward substitution L v = k.
        let mut v = vec![0.0; n];
        for i in 0..n {
            let row = &self.chol[i * n..i * n + i];
            let s: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
            v[i] = (k[i] - s) / self.chol[i * n + i];
        }
        let var = (1.0 - v.iter().map(|a| a * a).sum::<f64>()).max(0.0);
        (mean, var)
    }

    pub fn predict_mean(&self, x: f64) -> f64 {
        self.y_mean + self.y_scale * self.posterior(x).0
    }

    /// Posterior variance of the latent function, in label units.
    pub fn latent_variance(&self, x: f64) -> f64 {
        self.posterior(x).1 * self.y_scale * self.y_scale
    }

    /// Mean and 95% band for a new observation (latent plus noise variance).
    pub fn predict_band(&self, x: f64) -> (f64, f64, f64) {
        let (m, var) = self.posterior(x);
        let mean = self.y_mean + self.y_scale * m;
        let half = Z95 * self.y_scale * (var + self.noise).sqrt();
        (mean, mean - half, mean + half)
    }
}

pub fn fit_gpr_1d(x: &[f64], y: &[f64], params: &GprParams) -> Result<GprModel> {
    GprModel::fit(x, y, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_with_tiny_noise() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| (v / 3.0).sin()).collect();
        let p = GprParams {
            noise_grid: vec![1e-10],
            lengthscale_grid: vec![0.3],
        };
        let m = GprModel::fit(&x, &y, &p).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((m.predict_mean(*a) - b).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_labels_give_a_flat_mean() {
        let x: Vec<f64> = (0..15).map(|i| i as f64 * 0.7).collect();
        let m = GprModel::fit(&x, &[2.5; 15], &GprParams::default()).unwrap();
        for t in [-1.0, 0.0, 3.3, 20.0] {
            let (mean, lo, hi) = m.predict_band(t);
            assert!((mean - 2.5).abs() < 1e-9);
            assert!(lo <= mean && mean <= hi);
        }
    }

    #[test]
    fn variance_is_non_negative_and_below_prior() {
        let x: Vec<f64> = (0..30).map(|i| (i as f64 * 1.3).sin() * 4.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let m = GprModel::fit(&x, &y, &GprParams::default()).unwrap();
        let prior = m.y_scale * m.y_scale;
        for t in (-60..60).map(|i| i as f64 / 10.0) {
            let v = m.latent_variance(t);
            assert!(v >= 0.0 && v <= prior + 1e-12);
        }
    }

    #[test]
    fn rejects_single_point() {
        assert!(GprModel::fit(&[1.0], &[1.0], &GprParams::default()).is_err());
    }
}

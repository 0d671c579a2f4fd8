//! k-fold cross-validation.

use coopra_core::FusedDataset;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use crate::error::{LearnError, Result};
use crate::models::ModelSpec;

pub const DEFAULT_FOLDS: usize = 10;

/// Shuffled partition of `0..n` into `k` folds; the first `n % k` folds hold
/// one extra index.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(LearnError::Hyperparameter(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(LearnError::Contract(format!("{n} rows cannot fill {k} folds")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(perm[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// Metrics of the pooled out-of-fold predictions.
    pub pooled: Metrics,
    /// Per-fold metrics averaged over folds.
    pub fold_mean: Metrics,
    pub per_fold: Vec<Metrics>,
    /// Out-of-fold prediction for every row, in row order.
    pub predictions: Vec<f64>,
}

/// Cross-validates `spec` on the given folds. The model for fold `f` is
/// seeded with `seed + f`.
pub fn cross_validate_folds(
    spec: &ModelSpec,
    dataset: &FusedDataset,
    folds: &[Vec<usize>],
    seed: u64,
) -> Result<CvResult> {
    let n = dataset.n_rows();
    let mut fold_of = vec![usize::MAX; n];
    for (f, idx) in folds.iter().enumerate() {
        for &i in idx {
            if i >= n || fold_of[i] != usize::MAX {
                return Err(LearnError::Contract(format!("fold {f}: index {i} out of range or repeated")));
            }
            fold_of[i] = f;
        }
    }
    if fold_of.contains(&usize::MAX) {
        return Err(LearnError::Contract("folds do not cover every row".into()));
    }
    let fitted: Vec<Result<Vec<f64>>> = folds
        .par_iter()
        .enumerate()
        .map(|(f, test)| {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
            let rows: Vec<Vec<f64>> = train.iter().map(|&i| dataset.rows[i].clone()).collect();
            let labels: Vec<f64> = train.iter().map(|&i| dataset.labels[i]).collect();
            let model = spec.fit_rows(&dataset.columns, &rows, &labels, seed.wrapping_add(f as u64))?;
            let test_rows: Vec<Vec<f64>> = test.iter().map(|&i| dataset.rows[i].clone()).collect();
            model.predict(&dataset.columns, &test_rows)
        })
        .collect();
    let mut predictions = vec![0.0; n];
    let mut per_fold = Vec::with_capacity(folds.len());
    for (f, (test, res)) in folds.iter().zip(fitted).enumerate() {
        let pred = res.map_err(|e| LearnError::Fold {
            fold: f,
            source: Box::new(e),
        })?;
        for (&i, &p) in test.iter().zip(&pred) {
            predictions[i] = p;
        }
        let labels: Vec<f64> = test.iter().map(|&i| dataset.labels[i]).collect();
        per_fold.push(Metrics::compute(&pred, &labels)?);
    }
    Ok(CvResult {
        pooled: Metrics::compute(&predictions, &dataset.labels)?,
        fold_mean: Metrics::mean(&per_fold),
        per_fold,
        predictions,
    })
}

pub fn cross_validate(spec: &ModelSpec, dataset: &FusedDataset, k: usize, seed: u64) -> Result<CvResult> {
    let folds = kfold_split(dataset.n_rows(), k, seed)?;
    cross_validate_folds(spec, dataset, &folds, seed)
}

//! Hyperparameter grid search by cross-validated RMSE.

use coopra_core::FusedDataset;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{cross_validate_folds, kfold_split};
use super::metrics::Metrics;
use crate::error::{LearnError, Result};
use crate::models::{ModelKind, ModelSpec, SvrParams};

/// c × ε × γ, c outermost.
pub fn default_svr_grid() -> Vec<ModelSpec> {
    let mut grid = Vec::new();
    for c in [1.0, 10.0, 100.0] {
        for eps in [0.1, 1.0] {
            for gamma in [0.01, 0.1, 1.0] {
                grid.push(ModelSpec::Svr(SvrParams::new(c, eps, gamma)));
            }
        }
    }
    grid
}

/// The fixed grid for `kind`; kinds without tuned hyperparameters get their
/// defaults as a single cell.
pub fn default_grid(kind: ModelKind) -> Vec<ModelSpec> {
    match kind {
        ModelKind::Svr => default_svr_grid(),
        k => vec![ModelSpec::default_for(k)],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub spec: ModelSpec,
    /// Pooled cross-validated metrics; `None` if the cell failed.
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best_index: usize,
    pub best: ModelSpec,
    pub cells: Vec<GridCell>,
}

/// Evaluates every cell on the same folds and returns the lowest-RMSE cell;
/// ties go to the earlier cell. Fails only if every cell fails.
pub fn grid_search(grid: &[ModelSpec], dataset: &FusedDataset, k: usize, seed: u64) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(LearnError::Hyperparameter("empty grid".into()));
    }
    let folds = kfold_split(dataset.n_rows(), k, seed)?;
    let results: Vec<Result<Metrics>> = grid
        .par_iter()
        .map(|spec| cross_validate_folds(spec, dataset, &folds, seed).map(|r| r.pooled))
        .collect();
    let mut best: Option<(usize, f64)> = None;
    let mut first_err = None;
    let mut cells = Vec::with_capacity(grid.len());
    for (i, (spec, res)) in grid.iter().zip(results).enumerate() {
        match res {
            Ok(m) => {
                if best.is_none_or(|(_, r)| m.rmse < r) {
                    best = Some((i, m.rmse));
                }
                cells.push(GridCell {
                    spec: spec.clone(),
                    metrics: Some(m),
                    error: None,
                });
            }
            Err(e) => {
                log::warn!("grid cell {i} failed: {e}");
                cells.push(GridCell {
                    spec: spec.clone(),
                    metrics: None,
                    error: Some(e.to_string()),
                });
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some((i, _)) => Ok(GridResult {
            best_index: i,
            best: grid[i].clone(),
            cells,
        }),
        None => Err(LearnError::GridFailed {
            cells: grid.len(),
            first: Box::new(first_err.expect("non-empty grid")),
        }),
    }
}

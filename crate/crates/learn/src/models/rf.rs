use coopra_core::FusedDataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{to_columns, Node, Tree, TreeParams};
use super::{ModelSpec, Regressor};
use crate::error::{LearnError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfParams {
    pub n_trees: usize,
    pub min_split: usize,
    /// Features tried per node; `None` means ⌈p/3⌉ of the non-constant
    /// columns.
    pub mtry: Option<usize>,
    /// Draw a bootstrap sample per tree. Off, every tree sees the full data.
    pub bootstrap: bool,
}

impl Default for RfParams {
    fn default() -> Self {
        RfParams {
            n_trees: 100,
            min_split: 5,
            mtry: None,
            bootstrap: true,
        }
    }
}

impl RfParams {
    pub fn with_trees(n_trees: usize) -> Self {
        RfParams {
            n_trees,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn fit(rows: &[Vec<f64>], y: &[f64], params: &RfParams, seed: u64) -> Result<Forest> {
        if rows.is_empty() {
            return Err(LearnError::EmptyDataset);
        }
        if params.n_trees == 0 || params.min_split == 0 {
            return Err(LearnError::Hyperparameter("n_trees and min_split must be >= 1".into()));
        }
        // Constant columns can never split; leaving them out keeps the
        // random feature draws independent of them.
        let (active, columns): (Vec<usize>, Vec<Vec<f64>>) = to_columns(rows)
            .into_iter()
            .enumerate()
            .filter(|(_, c)| c.iter().any(|v| *v != c[0]))
            .unzip();
        let p = active.len();
        let mtry = params.mtry.unwrap_or(p.div_ceil(3)).clamp(1, p.max(1));
        let tp = TreeParams {
            min_split: params.min_split,
            mtry,
        };
        let n = y.len();
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                let weights = if params.bootstrap {
                    let mut w = vec![0u32; n];
                    for _ in 0..n {
                        w[rng.random_range(0..n)] += 1;
                    }
                    w
                } else {
                    vec![1u32; n]
                };
                let mut tree = Tree::fit(&columns, y, &weights, tp, &mut rng);
                for node in &mut tree.nodes {
                    if let Node::Split { feature, .. } = node {
                        *feature = active[*feature];
                    }
                }
                tree
            })
            .collect();
        Ok(Forest { trees })
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

pub fn fit_rf(dataset: &FusedDataset, params: &RfParams, seed: u64) -> Result<Regressor> {
    ModelSpec::Rf(params.clone()).fit(dataset, seed)
}

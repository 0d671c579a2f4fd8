//! Greedy forward feature selection.

use std::sync::atomic::{AtomicUsize, Ordering};

use coopra_core::FusedDataset;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LearnError, Result};
use crate::eval::cv::{cross_validate_folds, kfold_split};
use crate::models::ModelSpec;

/// Two R² values closer than this are treated as equal.
pub const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub candidate: String,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Accepted features in selection order.
    pub selected: Vec<String>,
    /// R² after each accepted feature.
    pub r2_path: Vec<f64>,
    /// Every evaluated feature set, as (iteration, added candidate, R²).
    pub trace: Vec<TraceEntry>,
    /// Evaluator calls, i.e. models trained and scored.
    pub models_trained: usize,
}

impl Selection {
    pub fn final_r2(&self) -> f64 {
        self.r2_path.last().copied().unwrap_or(0.0)
    }
}

/// Starting from the empty set (R² 0), repeatedly adds the candidate whose
/// feature set scores highest, until no candidate strictly improves on the
/// current R² or none remain. `evaluate` receives the trial feature set in
/// selection order; candidates of one iteration are scored in parallel.
pub fn forward_select<F>(candidates: &[String], evaluate: F) -> Result<Selection>
where
    F: Fn(&[String]) -> Result<f64> + Sync,
{
    if candidates.is_empty() {
        return Err(LearnError::Contract("no feature candidates".into()));
    }
    for (i, c) in candidates.iter().enumerate() {
        if candidates[..i].contains(c) {
            return Err(LearnError::Contract(format!("duplicate candidate {c:?}")));
        }
    }
    let calls = AtomicUsize::new(0);
    let mut remaining: Vec<String> = candidates.to_vec();
    let mut selected: Vec<String> = Vec::new();
    let mut r2_path = Vec::new();
    let mut trace = Vec::new();
    let mut current = 0.0;
    let mut iteration = 0;
    while !remaining.is_empty() {
        let scores: Vec<Result<f64>> = remaining
            .par_iter()
            .map(|c| {
                calls.fetch_add(1, Ordering::Relaxed);
                let mut set = selected.clone();
                set.push(c.clone());
                evaluate(&set)
            })
            .collect();
        let mut best: Option<(usize, f64)> = None;
        for (i, (c, s)) in remaining.iter().zip(scores).enumerate() {
            let r2 = s.map_err(|e| LearnError::Candidate {
                candidate: c.clone(),
                source: Box::new(e),
            })?;
            trace.push(TraceEntry {
                iteration,
                candidate: c.clone(),
                r2,
            });
            if best.is_none_or(|(_, b)| r2 > b + TIE_EPS) {
                best = Some((i, r2));
            }
        }
        let (i, r2) = best.expect("remaining is non-empty");
        if r2 <= current {
            break;
        }
        selected.push(remaining.remove(i));
        r2_path.push(r2);
        current = r2;
        iteration += 1;
    }
    Ok(Selection {
        selected,
        r2_path,
        trace,
        models_trained: calls.into_inner(),
    })
}

/// Forward selection over `candidates` (columns of `dataset`) scored by the
/// pooled R² of `k`-fold cross-validation on folds fixed by `seed`.
pub fn select_features(
    spec: &ModelSpec,
    dataset: &FusedDataset,
    candidates: &[String],
    k: usize,
    seed: u64,
) -> Result<Selection> {
    let folds = kfold_split(dataset.n_rows(), k, seed)?;
    forward_select(candidates, |set| {
        let sub = dataset.select_columns(set)?;
        let cv = cross_validate_folds(spec, &sub, &folds, seed)?;
        cv.pooled
            .r2
            .ok_or_else(|| LearnError::Undefined("R² of constant labels".into()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn single_improving_candidate() {
        let s = forward_select(&names(1), |_| Ok(0.3)).unwrap();
        assert_eq!(s.selected, ["f0"]);
        assert_eq!(s.models_trained, 1);
    }

    #[test]
    fn stops_when_no_strict_improvement() {
        // Additive scores: f1 helps most, then f0; f2 hurts.
        let gain = |c: &str| match c {
            "f0" => 0.2,
            "f1" => 0.5,
            _ => -0.1,
        };
        let s = forward_select(&names(3), |set| Ok(set.iter().map(|c| gain(c)).sum())).unwrap();
        assert_eq!(s.selected, ["f1", "f0"]);
        assert_eq!(s.models_trained, 3 + 2 + 1);
        assert_eq!(s.r2_path, [0.5, 0.7]);
    }

    #[test]
    fn ties_go_to_candidate_order() {
        let s = forward_select(&names(3), |set| Ok(0.4 + 1e-13 * set.len() as f64)).unwrap();
        assert_eq!(s.selected[0], "f0");
    }

    #[test]
    fn failures_name_the_candidate() {
        let err = forward_select(&names(2), |set| {
            if set.contains(&"f1".to_string()) {
                Err(LearnError::Numeric("boom".into()))
            } else {
                Ok(0.1)
            }
        })
        .unwrap_err();
        assert!(matches!(err, LearnError::Candidate { ref candidate, .. } if candidate == "f1"));
    }

    #[test]
    fn nothing_above_baseline_selects_nothing() {
        let s = forward_select(&names(4), |_| Ok(-0.2)).unwrap();
        assert!(s.selected.is_empty());
        assert_eq!(s.models_trained, 4);
    }
}

//! Regression metrics. Arguments are `(predictions, labels)`.

use serde::{Deserialize, Serialize};

use crate::error::{LearnError, Result};

fn check(pred: &[f64], labels: &[f64]) -> Result<()> {
    if pred.len() != labels.len() {
        return Err(LearnError::Contract(format!(
            "{} predictions for {} labels",
            pred.len(),
            labels.len()
        )));
    }
    if pred.is_empty() {
        return Err(LearnError::Contract("metrics of an empty vector".into()));
    }
    Ok(())
}

fn sse(pred: &[f64], labels: &[f64]) -> f64 {
    pred.iter().zip(labels).map(|(p, y)| (p - y) * (p - y)).sum()
}

/// Coefficient of determination. Undefined when all labels are equal.
pub fn r2(pred: &[f64], labels: &[f64]) -> Result<f64> {
    check(pred, labels)?;
    let mean = labels.iter().sum::<f64>() / labels.len() as f64;
    let sst: f64 = labels.iter().map(|y| (y - mean) * (y - mean)).sum();
    if sst == 0.0 {
        return Err(LearnError::Undefined("R² of constant labels".into()));
    }
    Ok(1.0 - sse(pred, labels) / sst)
}

pub fn mae(pred: &[f64], labels: &[f64]) -> Result<f64> {
    check(pred, labels)?;
    Ok(pred.iter().zip(labels).map(|(p, y)| (p - y).abs()).sum::<f64>() / pred.len() as f64)
}

pub fn rmse(pred: &[f64], labels: &[f64]) -> Result<f64> {
    check(pred, labels)?;
    Ok((sse(pred, labels) / pred.len() as f64).sqrt())
}

/// R² is `None` where it is undefined (constant labels).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub r2: Option<f64>,
    pub mae: f64,
    pub rmse: f64,
}

impl Metrics {
    pub fn compute(pred: &[f64], labels: &[f64]) -> Result<Metrics> {
        Ok(Metrics {
            r2: match r2(pred, labels) {
                Ok(v) => Some(v),
                Err(LearnError::Undefined(_)) => None,
                Err(e) => return Err(e),
            },
            mae: mae(pred, labels)?,
            rmse: rmse(pred, labels)?,
        })
    }

    /// Unweighted average over folds; R² averages the folds where it is defined.
    pub fn mean(items: &[Metrics]) -> Metrics {
        let n = items.len() as f64;
        let r2s: Vec<f64> = items.iter().filter_map(|m| m.r2).collect();
        Metrics {
            r2: (!r2s.is_empty()).then(|| r2s.iter().sum::<f64>() / r2s.len() as f64),
            mae: items.iter().map(|m| m.mae).sum::<f64>() / n,
            rmse: items.iter().map(|m| m.rmse).sum::<f64>() / n,
        }
    }
}

//! Regressors behind one fit/predict contract.

pub mod gpr;
pub mod m5;
pub mod mlp;
pub mod persist;
pub mod rf;
pub mod svr;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use coopra_core::FusedDataset;
use serde::{Deserialize, Serialize};

use crate::error::{LearnError, Result};

pub use gpr::{fit_gpr_1d, GprModel, GprParams};
pub use m5::{fit_m5, M5Model, M5Params};
pub use mlp::{fit_mlp, MlpModel, MlpParams};
pub use rf::{fit_rf, Forest, RfParams};
pub use svr::{fit_svr, SvrModel, SvrParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rf,
    M5,
    Mlp,
    Svr,
    Gpr,
}

impl ModelKind {
    /// The four regressors compared on the feature sets.
    pub const COMPARED: [ModelKind; 4] = [ModelKind::Rf, ModelKind::M5, ModelKind::Mlp, ModelKind::Svr];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rf => "rf",
            ModelKind::M5 => "m5",
            ModelKind::Mlp => "mlp",
            ModelKind::Svr => "svr",
            ModelKind::Gpr => "gpr",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = LearnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rf" => Ok(ModelKind::Rf),
            "m5" => Ok(ModelKind::M5),
            "mlp" => Ok(ModelKind::Mlp),
            "svr" => Ok(ModelKind::Svr),
            "gpr" => Ok(ModelKind::Gpr),
            other => Err(LearnError::Hyperparameter(format!("unknown model kind {other:?}"))),
        }
    }
}

/// A model kind together with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    Rf(RfParams),
    M5(M5Params),
    Mlp(MlpParams),
    Svr(SvrParams),
    Gpr(GprParams),
}

impl ModelSpec {
    /// Module defaults for `kind`. SVR defaults are the middle of the
    /// default grid; normally they come from a grid search.
    pub fn default_for(kind: ModelKind) -> ModelSpec {
        match kind {
            ModelKind::Rf => ModelSpec::Rf(RfParams::default()),
            ModelKind::M5 => ModelSpec::M5(M5Params::default()),
            ModelKind::Mlp => ModelSpec::Mlp(MlpParams::default()),
            ModelKind::Svr => ModelSpec::Svr(SvrParams::default()),
            ModelKind::Gpr => ModelSpec::Gpr(GprParams::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Rf(_) => ModelKind::Rf,
            ModelSpec::M5(_) => ModelKind::M5,
            ModelSpec::Mlp(_) => ModelKind::Mlp,
            ModelSpec::Svr(_) => ModelKind::Svr,
            ModelSpec::Gpr(_) => ModelKind::Gpr,
        }
    }

    /// Fits on `rows`/`labels`; `seed` drives every random choice.
    pub fn fit_rows(&self, columns: &[String], rows: &[Vec<f64>], labels: &[f64], seed: u64) -> Result<Regressor> {
        check_training_data(columns, rows, labels)?;
        let state = match self {
            ModelSpec::Rf(p) => Fitted::Rf(Forest::fit(rows, labels, p, seed)?),
            ModelSpec::M5(p) => Fitted::M5(M5Model::fit(rows, labels, p)?),
            ModelSpec::Mlp(p) => Fitted::Mlp(MlpModel::fit(rows, labels, p, seed)?),
            ModelSpec::Svr(p) => Fitted::Svr(SvrModel::fit(rows, labels, p)?),
            ModelSpec::Gpr(p) => {
                if columns.len() != 1 {
                    return Err(LearnError::Hyperparameter(format!(
                        "GPR is one-dimensional, got {} columns",
                        columns.len()
                    )));
                }
                let x: Vec<f64> = rows.iter().map(|r| r[0]).collect();
                Fitted::Gpr(GprModel::fit(&x, labels, p)?)
            }
        };
        Ok(Regressor {
            spec: self.clone(),
            columns: columns.to_vec(),
            state,
        })
    }

    pub fn fit(&self, dataset: &FusedDataset, seed: u64) -> Result<Regressor> {
        self.fit_rows(&dataset.columns, &dataset.rows, &dataset.labels, seed)
    }
}

fn check_training_data(columns: &[String], rows: &[Vec<f64>], labels: &[f64]) -> Result<()> {
    if rows.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    if rows.len() != labels.len() {
        return Err(LearnError::Contract(format!("{} rows but {} labels", rows.len(), labels.len())));
    }
    if columns.is_empty() {
        return Err(LearnError::Contract("no feature columns".into()));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != columns.len()) {
        return Err(LearnError::Contract(format!(
            "row has {} values for {} columns",
            r.len(),
            columns.len()
        )));
    }
    if !rows.iter().flatten().chain(labels).all(|v| v.is_finite()) {
        return Err(LearnError::Contract("training data contains non-finite values".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "state", rename_all = "lowercase")]
pub enum Fitted {
    Rf(Forest),
    M5(M5Model),
    Mlp(MlpModel),
    Svr(SvrModel),
    Gpr(GprModel),
}

/// A trained model. Immutable; refitting yields a new value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regressor {
    pub spec: ModelSpec,
    pub columns: Vec<String>,
    pub state: Fitted,
}

impl Regressor {
    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    /// Predicts one value per row. `columns` must equal the training columns.
    pub fn predict(&self, columns: &[String], rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        if columns != self.columns.as_slice() {
            return Err(LearnError::ColumnMismatch {
                expected: self.columns.clone(),
                got: columns.to_vec(),
            });
        }
        if let Some(r) = rows.iter().find(|r| r.len() != columns.len()) {
            return Err(LearnError::Contract(format!(
                "row has {} values for {} columns",
                r.len(),
                columns.len()
            )));
        }
        Ok(rows.iter().map(|r| self.predict_row(r)).collect())
    }

    pub fn predict_dataset(&self, dataset: &FusedDataset) -> Result<Vec<f64>> {
        self.predict(&dataset.columns, &dataset.rows)
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        match &self.state {
            Fitted::Rf(m) => m.predict_row(row),
            Fitted::M5(m) => m.predict_row(row),
            Fitted::Mlp(m) => m.predict_row(row),
            Fitted::Svr(m) => m.predict_row(row),
            Fitted::Gpr(m) => m.predict_mean(row[0]),
        }
    }
}

/// Per-column affine standardization fitted on training rows. Constant
/// columns are centred but not scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Standardizer {
        let p = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let mut mean = vec![0.0; p];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; p];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn transform_into(&self, row: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(row.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s));
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(row.len());
        self.transform_into(row, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_parse_and_print() {
        for k in [ModelKind::Rf, ModelKind::M5, ModelKind::Mlp, ModelKind::Svr, ModelKind::Gpr] {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert!("knn".parse::<ModelKind>().is_err());
    }

    #[test]
    fn predict_rejects_other_columns() {
        let cols = vec!["a".to_string(), "b".to_string()];
        let rows = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![3.0, 0.0]];
        let m = ModelSpec::default_for(ModelKind::M5).fit_rows(&cols, &rows, &[1.0, 2.0, 3.0], 0).unwrap();
        let swapped = vec!["b".to_string(), "a".to_string()];
        assert!(matches!(m.predict(&swapped, &rows), Err(LearnError::ColumnMismatch { .. })));
        assert_eq!(m.predict(&cols, &[]).unwrap(), Vec::<f64>::new());
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let cols = vec!["a".to_string()];
        for kind in ModelKind::COMPARED {
            let r = ModelSpec::default_for(kind).fit_rows(&cols, &[], &[], 0);
            assert!(matches!(r, Err(LearnError::EmptyDataset)), "{kind}");
        }
    }

    #[test]
    fn standardizer_handles_constant_columns() {
        let s = Standardizer::fit(&[vec![1.0, 5.0], vec![3.0, 5.0]]);
        assert_eq!(s.transform(&[3.0, 5.0]), vec![1.0, 0.0]);
    }
}

//! Client-only, network-only and cooperative feature sets compared per model.

use coopra_core::types::{net_feature_names, ue_feature_names};
use coopra_core::{fusion, Direction, FusedDataset, TransmissionRecord};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cv::{cross_validate_folds, kfold_split, CvResult, DEFAULT_FOLDS};
use super::grid::{default_svr_grid, grid_search, GridResult};
use super::metrics::Metrics;
use crate::error::{LearnError, Result};
use crate::featsel::{forward_select, Selection};
use crate::models::{GprModel, GprParams, ModelKind, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    Ue,
    Net,
    Coop,
}

impl Approach {
    pub const ALL: [Approach; 3] = [Approach::Ue, Approach::Net, Approach::Coop];

    pub fn name(self) -> &'static str {
        match self {
            Approach::Ue => "ue",
            Approach::Net => "net",
            Approach::Coop => "coop",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    pub models: Vec<ModelKind>,
    pub folds: usize,
    pub seed: u64,
    /// Fixed hyperparameters per kind. Kinds without an entry use their
    /// module defaults, except SVR which is grid-searched on all features.
    pub specs: Vec<ModelSpec>,
    pub gpr: GprParams,
    /// GPR bands are fitted on at most this many (measured, predicted) pairs.
    pub band_max_points: usize,
    /// Points at which each band is sampled; 0 disables bands.
    pub band_samples: usize,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            models: ModelKind::COMPARED.to_vec(),
            folds: DEFAULT_FOLDS,
            seed: 0,
            specs: Vec::new(),
            gpr: GprParams::default(),
            band_max_points: 250,
            band_samples: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSample {
    pub measured: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// 95% band of predicted against measured throughput.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprBand {
    pub noise: f64,
    pub lengthscale: f64,
    pub n_fit: usize,
    pub samples: Vec<BandSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproachResult {
    pub model: ModelKind,
    pub approach: Approach,
    pub features: Vec<String>,
    pub selection: Option<Selection>,
    pub pooled: Metrics,
    pub fold_mean: Metrics,
    pub per_fold: Vec<Metrics>,
    /// (measured, predicted) per transmission.
    pub pairs: Vec<[f64; 2]>,
    pub band: Option<GprBand>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: ModelKind,
    pub rmse_ue: f64,
    pub rmse_net: f64,
    pub rmse_coop: f64,
    /// (coop − ue) / ue on pooled RMSE; negative is an improvement.
    pub rmse_change_coop_vs_ue: f64,
    /// The same on fold-averaged RMSE.
    pub rmse_change_coop_vs_ue_fold_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub direction: Direction,
    pub n_rows: usize,
    pub specs: Vec<ModelSpec>,
    pub svr_grid: Option<GridResult>,
    pub results: Vec<ApproachResult>,
    pub summary: Vec<ModelSummary>,
}

impl DirectionReport {
    pub fn result(&self, model: ModelKind, approach: Approach) -> Option<&ApproachResult> {
        self.results.iter().find(|r| r.model == model && r.approach == approach)
    }

    pub fn summary_for(&self, model: ModelKind) -> Option<&ModelSummary> {
        self.summary.iter().find(|s| s.model == model)
    }
}

/// Replaces each record's load features with those of another, randomly
/// chosen record, making them independent of the label while keeping their
/// distribution.
pub fn permute_net_features(records: &[TransmissionRecord], seed: u64) -> Vec<TransmissionRecord> {
    let mut nets: Vec<_> = records.iter().map(|r| r.net).collect();
    nets.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    records
        .iter()
        .zip(nets)
        .map(|(r, net)| TransmissionRecord { net, ..r.clone() })
        .collect()
}

/// Cross-validation of the training-fold mean, used when selection accepts
/// no feature.
fn mean_predictor_cv(labels: &[f64], folds: &[Vec<usize>]) -> Result<CvResult> {
    let n = labels.len();
    let mut predictions = vec![0.0; n];
    let mut per_fold = Vec::new();
    for test in folds {
        let mut in_test = vec![false; n];
        test.iter().for_each(|&i| in_test[i] = true);
        let train: Vec<f64> = (0..n).filter(|&i| !in_test[i]).map(|i| labels[i]).collect();
        let mean = train.iter().sum::<f64>() / train.len() as f64;
        test.iter().for_each(|&i| predictions[i] = mean);
        let y: Vec<f64> = test.iter().map(|&i| labels[i]).collect();
        per_fold.push(Metrics::compute(&vec![mean; y.len()], &y)?);
    }
    Ok(CvResult {
        pooled: Metrics::compute(&predictions, labels)?,
        fold_mean: Metrics::mean(&per_fold),
        per_fold,
        predictions,
    })
}

/// Fits predicted against measured values on at most `max_points` randomly
/// chosen pairs and samples the 95% band at `samples` evenly spaced measured
/// values. `None` if there is nothing to fit or no samples are wanted.
pub fn gpr_band(
    measured: &[f64],
    predicted: &[f64],
    gpr: &GprParams,
    max_points: usize,
    samples: usize,
    seed: u64,
) -> Result<Option<GprBand>> {
    if measured.len() != predicted.len() {
        return Err(LearnError::Contract(format!(
            "{} measured but {} predicted values",
            measured.len(),
            predicted.len()
        )));
    }
    if samples == 0 || measured.len() < 2 || max_points < 2 {
        return Ok(None);
    }
    let n = measured.len();
    let mut idx: Vec<usize> = if n > max_points {
        index::sample(&mut ChaCha8Rng::seed_from_u64(seed), n, max_points).into_vec()
    } else {
        (0..n).collect()
    };
    idx.sort_unstable();
    let x: Vec<f64> = idx.iter().map(|&i| measured[i]).collect();
    let y: Vec<f64> = idx.iter().map(|&i| predicted[i]).collect();
    let gp = GprModel::fit(&x, &y, gpr)?;
    let (lo, hi) = x.iter().fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
    let m = samples;
    let samples = (0..m)
        .map(|i| {
            let t = if m == 1 { lo } else { lo + (hi - lo) * i as f64 / (m - 1) as f64 };
            let (mean, lower, upper) = gp.predict_band(t);
            BandSample {
                measured: t,
                mean,
                lower,
                upper,
            }
        })
        .collect();
    Ok(Some(GprBand {
        noise: gp.noise,
        lengthscale: gp.lengthscale,
        n_fit: x.len(),
        samples,
    }))
}

/// Runs the three-way comparison on the fused records of `direction`. All
/// evaluations share one fold assignment derived from `options.seed`.
pub fn compare_approaches(
    records: &[TransmissionRecord],
    direction: Direction,
    options: &CompareOptions,
) -> Result<DirectionReport> {
    let ue = ue_feature_names();
    let net = net_feature_names();
    let all: Vec<String> = ue.iter().chain(&net).cloned().collect();
    let full = fusion::build_dataset(records, direction, &all)?;
    if full.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let seed = options.seed;
    let folds = kfold_split(full.n_rows(), options.folds, seed)?;

    let mut specs = Vec::new();
    let mut svr_grid = None;
    for &kind in &options.models {
        let spec = match options.specs.iter().find(|s| s.kind() == kind) {
            Some(s) => s.clone(),
            None if kind == ModelKind::Svr => {
                let g = grid_search(&default_svr_grid(), &full, options.folds, seed)?;
                let best = g.best.clone();
                svr_grid = Some(g);
                best
            }
            None => ModelSpec::default_for(kind),
        };
        specs.push(spec);
    }

    let mut results = Vec::new();
    let mut summary = Vec::new();
    for spec in &specs {
        let kind = spec.kind();
        let mut rmse = [0.0; 3];
        let mut rmse_fold = [0.0; 3];
        for (a, approach) in Approach::ALL.into_iter().enumerate() {
            log::info!("{} {} {}", direction.code(), kind, approach.name());
            let (features, selection) = match approach {
                Approach::Ue => (ue.clone(), None),
                Approach::Net => (net.clone(), None),
                Approach::Coop => {
                    let sel = forward_select(&all, |set| {
                        let sub = full.select_columns(set)?;
                        let cv = cross_validate_folds(spec, &sub, &folds, seed)?;
                        cv.pooled
                            .r2
                            .ok_or_else(|| LearnError::Undefined("R² of constant labels".into()))
                    })?;
                    (sel.selected.clone(), Some(sel))
                }
            };
            let cv = if features.is_empty() {
                mean_predictor_cv(&full.labels, &folds)?
            } else {
                let data: FusedDataset = full.select_columns(&features)?;
                cross_validate_folds(spec, &data, &folds, seed)?
            };
            rmse[a] = cv.pooled.rmse;
            rmse_fold[a] = cv.fold_mean.rmse;
            let band_seed = seed ^ ((a as u64 + 1) << 32) ^ kind as u64;
            results.push(ApproachResult {
                model: kind,
                approach,
                features,
                selection,
                band: gpr_band(
                    &full.labels,
                    &cv.predictions,
                    &options.gpr,
                    options.band_max_points,
                    options.band_samples,
                    band_seed,
                )?,
                pairs: full.labels.iter().zip(&cv.predictions).map(|(m, p)| [*m, *p]).collect(),
                pooled: cv.pooled,
                fold_mean: cv.fold_mean,
                per_fold: cv.per_fold,
            });
        }
        summary.push(ModelSummary {
            model: kind,
            rmse_ue: rmse[0],
            rmse_net: rmse[1],
            rmse_coop: rmse[2],
            rmse_change_coop_vs_ue: (rmse[2] - rmse[0]) / rmse[0],
            rmse_change_coop_vs_ue_fold_mean: (rmse_fold[2] - rmse_fold[0]) / rmse_fold[0],
        });
    }
    Ok(DirectionReport {
        direction,
        n_rows: full.n_rows(),
        specs,
        svr_grid,
        results,
        summary,
    })
}

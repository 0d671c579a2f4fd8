//! Metrics, cross-validation, grid search and the feature-set comparison.

pub mod compare;
pub mod cv;
pub mod grid;
pub mod metrics;

pub use compare::{compare_approaches, gpr_band, permute_net_features, Approach, CompareOptions, DirectionReport};
pub use cv::{cross_validate, cross_validate_folds, kfold_split, CvResult, DEFAULT_FOLDS};
pub use grid::{default_grid, default_svr_grid, grid_search, GridResult};
pub use metrics::{mae, r2, rmse, Metrics};

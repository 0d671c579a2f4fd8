//! Learning side of cooperative data-rate prediction: native regressors,
//! greedy forward feature selection and the cross-validated comparison of
//! client-only, network-only and cooperative feature sets.

pub mod error;
pub mod eval;
pub mod featsel;
pub mod models;

pub use error::{LearnError, Result};
pub use models::{ModelKind, ModelSpec, Regressor};

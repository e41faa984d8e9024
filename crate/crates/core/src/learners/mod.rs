//! Base regression learners behind a uniform fit/predict capability.
//!
//! Every meta-learner stage talks to a [`Regressor`]; the fitted result is a
//! [`FittedRegressor`] that is immutable and shareable across threads.

use std::any::Any;
use std::fmt;

use crate::error::Result;
use crate::matrix::Matrix;

mod forest;
mod knn;
mod ols;
mod propensity;
mod simple;

pub use forest::{honest_forest, ForestParams, HonestForest, HonestTree};
pub use knn::{knn, rate_optimal_k, KChoice, KnnModel, KnnRegressor};
pub use ols::{ols, LinearModel, OlsRegressor};
pub use propensity::{
    fit_propensity, LogisticModel, PropensityMethod, PropensityModel, DEFAULT_PROPENSITY_CLIP,
};
pub use simple::{ColumnSubset, ConstantModel, MeanRegressor};

/// Unfitted learner configuration.
pub trait Regressor: Send + Sync + fmt::Debug {
    /// Fits on `features` (n x d) and `targets` (length n). Inputs are not mutated.
    fn fit(&self, features: &Matrix, targets: &[f64]) -> Result<Box<dyn FittedRegressor>>;

    /// Short tag used in learner names, e.g. `rf`.
    fn tag(&self) -> String;
}

/// A fitted model. Prediction is deterministic.
pub trait FittedRegressor: Send + Sync + fmt::Debug {
    fn predict_one(&self, x: &[f64]) -> f64;

    fn predict(&self, features: &Matrix) -> Vec<f64> {
        features.iter_rows().map(|r| self.predict_one(r)).collect()
    }

    fn as_any(&self) -> &dyn Any;
}

pub(crate) fn check_fit_inputs(features: &Matrix, targets: &[f64]) -> Result<()> {
    use crate::error::Error;
    if features.rows() != targets.len() {
        return Err(Error::InvalidDimension(format!(
            "{} feature rows but {} targets",
            features.rows(),
            targets.len()
        )));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("targets must be finite".into()));
    }
    Ok(())
}

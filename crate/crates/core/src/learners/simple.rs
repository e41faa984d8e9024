use std::any::Any;

use super::{check_fit_inputs, FittedRegressor, Regressor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Predicts a single number everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantModel(pub f64);

impl FittedRegressor for ConstantModel {
    fn predict_one(&self, _x: &[f64]) -> f64 {
        self.0
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Fits the sample mean of the targets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MeanRegressor;

impl Regressor for MeanRegressor {
    fn fit(&self, features: &Matrix, targets: &[f64]) -> Result<Box<dyn FittedRegressor>> {
        check_fit_inputs(features, targets)?;
        if targets.is_empty() {
            return Err(Error::InvalidArgument("cannot average zero targets".into()));
        }
        Ok(Box::new(ConstantModel(targets.iter().sum::<f64>() / targets.len() as f64)))
    }

    fn tag(&self) -> String {
        "mean".into()
    }
}

/// Restricts a base learner to a fixed set of feature columns.
#[derive(Debug)]
pub struct ColumnSubset<R> {
    pub columns: Vec<usize>,
    pub inner: R,
}

#[derive(Debug)]
struct SubsetModel {
    columns: Vec<usize>,
    inner: Box<dyn FittedRegressor>,
}

impl FittedRegressor for SubsetModel {
    fn predict_one(&self, x: &[f64]) -> f64 {
        let sub: Vec<f64> = self.columns.iter().map(|&j| x[j]).collect();
        self.inner.predict_one(&sub)
    }

    fn predict(&self, features: &Matrix) -> Vec<f64> {
        self.inner.predict(&features.select_cols(&self.columns))
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

impl<R: Regressor> Regressor for ColumnSubset<R> {
    fn fit(&self, features: &Matrix, targets: &[f64]) -> Result<Box<dyn FittedRegressor>> {
        if let Some(&bad) = self.columns.iter().find(|&&j| j >= features.cols()) {
            return Err(Error::InvalidDimension(format!(
                "column {bad} out of range for {} features",
                features.cols()
            )));
        }
        let inner = self.inner.fit(&features.select_cols(&self.columns), targets)?;
        Ok(Box::new(SubsetModel {
            columns: self.columns.clone(),
            inner,
        }))
    }

    fn tag(&self) -> String {
        self.inner.tag()
    }
}

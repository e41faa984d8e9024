use std::any::Any;

use nalgebra::DVector;

use super::{check_fit_inputs, FittedRegressor, Regressor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Relative threshold on `|R_jj| / max |R_ii|` below which a design is
/// treated as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Least-squares fit `y ~ intercept + X beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: Option<f64>,
}

impl LinearModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum();
        lin + self.intercept.unwrap_or(0.0)
    }
}

impl FittedRegressor for LinearModel {
    fn predict_one(&self, x: &[f64]) -> f64 {
        self.predict_row(x)
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Ordinary least squares via Householder QR. Rank-deficient designs are an
/// error; there is no ridge or pseudo-inverse fallback.
pub fn ols(features: &Matrix, targets: &[f64], with_intercept: bool) -> Result<LinearModel> {
    check_fit_inputs(features, targets)?;
    let n = features.rows();
    let p = features.cols() + usize::from(with_intercept);
    if p == 0 {
        return Err(Error::InvalidDimension("OLS needs at least one regressor".into()));
    }
    if n < p {
        return Err(Error::SingularDesign);
    }
    let design = if with_intercept {
        features.with_constant_column(1.0).to_nalgebra()
    } else {
        features.to_nalgebra()
    };
    let qr = design.qr();
    let r = qr.r();
    let max_diag = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if max_diag == 0.0 || (0..p).any(|i| r[(i, i)].abs() <= RANK_TOL * max_diag) {
        return Err(Error::SingularDesign);
    }
    let y = DVector::from_column_slice(targets);
    let qty = qr.q().transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::SingularDesign)?;
    let mut coefficients: Vec<f64> = beta.iter().copied().collect();
    let intercept = with_intercept.then(|| coefficients.pop().unwrap_or(0.0));
    Ok(LinearModel {
        coefficients,
        intercept,
    })
}

/// OLS as a [`Regressor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OlsRegressor {
    pub intercept: bool,
}

impl Default for OlsRegressor {
    fn default() -> Self {
        Self { intercept: true }
    }
}

impl Regressor for OlsRegressor {
    fn fit(&self, features: &Matrix, targets: &[f64]) -> Result<Box<dyn FittedRegressor>> {
        Ok(Box::new(ols(features, targets, self.intercept)?))
    }

    fn tag(&self) -> String {
        if self.intercept { "ols" } else { "ols0" }.into()
    }
}

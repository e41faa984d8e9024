use std::fmt;

use nalgebra::{DMatrix, DVector};

use super::forest::{honest_forest, ForestParams, HonestForest};
use super::FittedRegressor;
use crate::dgp::FeatureFn;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_PROPENSITY_CLIP: f64 = 0.025;

const IRLS_MAX_ITER: usize = 100;
const IRLS_TOL: f64 = 1e-10;

/// How [`fit_propensity`] estimates `e(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PropensityMethod {
    /// Treated fraction in the honest-forest leaves.
    Forest(ForestParams),
    Logistic,
}

/// Logistic regression `P(W = 1 | x) = 1 / (1 + exp(-(b0 + x b)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl LogisticModel {
    pub fn probability(&self, x: &[f64]) -> f64 {
        let eta = self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
        1.0 / (1.0 + (-eta).exp())
    }

    /// Maximum likelihood by iteratively reweighted least squares.
    pub fn fit(features: &Matrix, treatment: &[bool]) -> Result<Self> {
        let n = features.rows();
        let p = features.cols() + 1;
        let x = features.with_constant_column(1.0).to_nalgebra();
        let w = DVector::from_iterator(n, treatment.iter().map(|&t| f64::from(u8::from(t))));
        let mut beta = DVector::zeros(p);
        for _ in 0..IRLS_MAX_ITER {
            let eta = &x * &beta;
            let mu = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
            let weights = mu.map(|m| (m * (1.0 - m)).max(1e-10));
            let mut xtwx = DMatrix::zeros(p, p);
            for i in 0..n {
                let row = x.row(i);
                xtwx += weights[i] * row.transpose() * row;
            }
            for j in 0..p {
                xtwx[(j, j)] += 1e-10;
            }
            let grad = x.transpose() * (&w - &mu);
            let step = xtwx.cholesky().ok_or(Error::SingularDesign)?.solve(&grad);
            beta += &step;
            if step.amax() < IRLS_TOL * (1.0 + beta.amax()) {
                break;
            }
        }
        let mut coefficients: Vec<f64> = beta.iter().copied().collect();
        let intercept = coefficients.pop().unwrap_or(0.0);
        Ok(Self {
            coefficients,
            intercept,
        })
    }
}

#[derive(Clone)]
enum Source {
    Forest(HonestForest),
    Logistic(LogisticModel),
    Known(FeatureFn),
}

/// Propensity estimate clipped into `[clip, 1 - clip]`. A known propensity
/// may be left unclipped (`clip = 0`).
#[derive(Clone)]
pub struct PropensityModel {
    source: Source,
    clip: f64,
}

impl fmt::Debug for PropensityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.source {
            Source::Forest(_) => "forest",
            Source::Logistic(_) => "logistic",
            Source::Known(_) => "known",
        };
        f.debug_struct("PropensityModel")
            .field("source", &kind)
            .field("clip", &self.clip)
            .finish()
    }
}

impl PropensityModel {
    /// A propensity function fixed by design, evaluated as is.
    pub fn known(e: FeatureFn) -> Self {
        Self {
            source: Source::Known(e),
            clip: 0.0,
        }
    }

    pub fn constant(e: f64) -> Self {
        Self::known(std::sync::Arc::new(move |_| e))
    }

    pub fn with_clip(mut self, clip: f64) -> Result<Self> {
        check_clip(clip)?;
        self.clip = clip;
        Ok(self)
    }

    pub fn clip(&self) -> f64 {
        self.clip
    }

    pub fn is_known(&self) -> bool {
        matches!(self.source, Source::Known(_))
    }

    pub fn predict_one(&self, x: &[f64]) -> f64 {
        let raw = match &self.source {
            Source::Forest(f) => f.predict_row(x),
            Source::Logistic(m) => m.probability(x),
            Source::Known(e) => e(x),
        };
        if self.clip > 0.0 {
            raw.clamp(self.clip, 1.0 - self.clip)
        } else {
            raw
        }
    }

    pub fn predict(&self, features: &Matrix) -> Vec<f64> {
        match &self.source {
            Source::Forest(f) => {
                let raw = f.predict(features);
                raw.into_iter().map(|v| v.clamp(self.clip, 1.0 - self.clip)).collect()
            }
            _ => features.iter_rows().map(|r| self.predict_one(r)).collect(),
        }
    }
}

fn check_clip(clip: f64) -> Result<()> {
    if clip > 0.0 && clip < 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("propensity clip must lie in (0, 0.5), got {clip}")))
    }
}

pub fn fit_propensity(
    features: &Matrix,
    treatment: &[bool],
    method: PropensityMethod,
    clip: f64,
) -> Result<PropensityModel> {
    check_clip(clip)?;
    if features.rows() != treatment.len() {
        return Err(Error::InvalidDimension(format!(
            "{} feature rows but {} treatment labels",
            features.rows(),
            treatment.len()
        )));
    }
    let n1 = treatment.iter().filter(|&&w| w).count();
    if n1 == 0 || n1 == treatment.len() {
        return Err(Error::SingleClass);
    }
    let source = match method {
        PropensityMethod::Forest(params) => {
            let w: Vec<f64> = treatment.iter().map(|&t| f64::from(u8::from(t))).collect();
            Source::Forest(honest_forest(features, &w, &params)?)
        }
        PropensityMethod::Logistic => Source::Logistic(LogisticModel::fit(features, treatment)?),
    };
    Ok(PropensityModel { source, clip })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    fn balanced(n: usize, seed: u64) -> (Matrix, Vec<bool>) {
        let mut rng = rng_from_seed(seed);
        let mut x = Matrix::zeros(n, 2);
        let mut w = Vec::with_capacity(n);
        for i in 0..n {
            x.set(i, 0, rng.gen());
            x.set(i, 1, rng.gen());
            w.push(rng.gen::<bool>());
        }
        (x, w)
    }

    #[test]
    fn single_class_rejected() {
        let x = Matrix::column_vector(&[0.0, 1.0, 2.0]);
        for m in [PropensityMethod::Logistic, PropensityMethod::Forest(ForestParams::default())] {
            assert!(matches!(fit_propensity(&x, &[true; 3], m, 0.025), Err(Error::SingleClass)));
        }
    }

    #[test]
    fn bad_clip_rejected() {
        let x = Matrix::column_vector(&[0.0, 1.0]);
        assert!(fit_propensity(&x, &[true, false], PropensityMethod::Logistic, 0.5).is_err());
        assert!(fit_propensity(&x, &[true, false], PropensityMethod::Logistic, 0.0).is_err());
    }

    #[test]
    fn independent_balanced_treatment_has_mean_half() {
        let (x, w) = balanced(10_000, 11);
        let (probe, _) = balanced(2000, 12);
        let forest = ForestParams::default().with_trees(50);
        for m in [PropensityMethod::Logistic, PropensityMethod::Forest(forest)] {
            let e = fit_propensity(&x, &w, m, DEFAULT_PROPENSITY_CLIP).unwrap();
            let p = e.predict(&probe);
            let mean = p.iter().sum::<f64>() / p.len() as f64;
            assert!((mean - 0.5).abs() < 0.03, "{m:?}: {mean}");
        }
    }

    #[test]
    fn outputs_clipped() {
        // perfectly separated classes push the logistic fit to 0 and 1
        let x = Matrix::column_vector(&(0..40).map(f64::from).collect::<Vec<_>>());
        let w: Vec<bool> = (0..40).map(|i| i >= 20).collect();
        let e = fit_propensity(&x, &w, PropensityMethod::Logistic, 0.1).unwrap();
        for v in [-100.0, 0.0, 19.5, 40.0, 1e6] {
            let p = e.predict_one(&[v]);
            assert!((0.1..=0.9).contains(&p), "{v}: {p}");
        }
    }

    #[test]
    fn logistic_recovers_coefficients() {
        let mut rng = rng_from_seed(3);
        let n = 20_000;
        let mut x = Matrix::zeros(n, 1);
        let mut w = Vec::with_capacity(n);
        for i in 0..n {
            let v: f64 = rng.gen::<f64>() * 4.0 - 2.0;
            x.set(i, 0, v);
            let p = 1.0 / (1.0 + (-(0.3 + 1.5 * v)).exp());
            w.push(rng.gen::<f64>() < p);
        }
        let m = LogisticModel::fit(&x, &w).unwrap();
        assert!((m.intercept - 0.3).abs() < 0.1);
        assert!((m.coefficients[0] - 1.5).abs() < 0.15);
    }

    #[test]
    fn known_is_unclipped() {
        let e = PropensityModel::constant(0.01);
        assert_eq!(e.predict_one(&[0.0]), 0.01);
        let c = e.with_clip(0.025).unwrap();
        assert_eq!(c.predict_one(&[0.0]), 0.025);
    }
}

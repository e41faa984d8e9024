//! S-, T-, X-, F- and U-learners.

use std::fmt;
use std::sync::Arc;

use crate::data::Dataset;
use crate::dgp::FeatureFn;
use crate::error::{Arm, Error, Result};
use crate::learners::{
    fit_propensity, FittedRegressor, PropensityMethod, PropensityModel, Regressor,
    DEFAULT_PROPENSITY_CLIP,
};
use crate::matrix::Matrix;

pub const DEFAULT_U_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CateKind {
    S,
    T,
    X,
    F,
    U,
}

impl fmt::Display for CateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CateKind::S => "s",
            CateKind::T => "t",
            CateKind::X => "x",
            CateKind::F => "f",
            CateKind::U => "u",
        };
        f.write_str(s)
    }
}

/// The X-learner weight `g(x)` on the control-side estimate.
#[derive(Debug, Clone)]
pub enum WeightRule {
    Zero,
    One,
    Constant(f64),
    Propensity(PropensityModel),
}

impl WeightRule {
    pub fn constant(c: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&c) {
            Ok(Self::Constant(c))
        } else {
            Err(Error::InvalidArgument(format!("weight {c} outside [0,1]")))
        }
    }

    pub fn weight(&self, x: &[f64]) -> f64 {
        match self {
            WeightRule::Zero => 0.0,
            WeightRule::One => 1.0,
            WeightRule::Constant(c) => c.clamp(0.0, 1.0),
            WeightRule::Propensity(e) => e.predict_one(x).clamp(0.0, 1.0),
        }
    }

    fn weights(&self, xs: &Matrix) -> Vec<f64> {
        match self {
            WeightRule::Propensity(e) => e.predict(xs).into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            _ => xs.iter_rows().map(|x| self.weight(x)).collect(),
        }
    }
}

/// Second-stage pseudo-outcomes of the X-learner.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputedEffects {
    /// `Y1_i - mu0_hat(X1_i)`, treated rows in dataset order.
    pub d_treated: Vec<f64>,
    /// `mu1_hat(X0_i) - Y0_i`, control rows in dataset order.
    pub d_control: Vec<f64>,
}

type Fitted = Box<dyn FittedRegressor>;

/// A fitted meta-learner.
#[derive(Debug)]
pub struct CateModel {
    kind: CateKind,
    dim: usize,
    mu: Option<Fitted>,
    mu0: Option<Fitted>,
    mu1: Option<Fitted>,
    tau0: Option<Fitted>,
    tau1: Option<Fitted>,
    tau: Option<Fitted>,
    mu_obs: Option<Fitted>,
    propensity: Option<PropensityModel>,
    weight: WeightRule,
    floor_events: usize,
}

impl CateModel {
    fn empty(kind: CateKind, dim: usize) -> Self {
        Self {
            kind,
            dim,
            mu: None,
            mu0: None,
            mu1: None,
            tau0: None,
            tau1: None,
            tau: None,
            mu_obs: None,
            propensity: None,
            weight: WeightRule::Zero,
            floor_events: 0,
        }
    }

    pub fn kind(&self) -> CateKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// S-learner regression on `(x, w)`; `w` is the last column.
    pub fn mu(&self) -> Option<&dyn FittedRegressor> {
        self.mu.as_deref()
    }

    pub fn mu0(&self) -> Option<&dyn FittedRegressor> {
        self.mu0.as_deref()
    }

    pub fn mu1(&self) -> Option<&dyn FittedRegressor> {
        self.mu1.as_deref()
    }

    pub fn tau0(&self) -> Option<&dyn FittedRegressor> {
        self.tau0.as_deref()
    }

    pub fn tau1(&self) -> Option<&dyn FittedRegressor> {
        self.tau1.as_deref()
    }

    /// Final-stage regression of the F- and U-learners.
    pub fn tau(&self) -> Option<&dyn FittedRegressor> {
        self.tau.as_deref()
    }

    pub fn mu_obs(&self) -> Option<&dyn FittedRegressor> {
        self.mu_obs.as_deref()
    }

    pub fn propensity(&self) -> Option<&PropensityModel> {
        self.propensity.as_ref()
    }

    pub fn weight_rule(&self) -> &WeightRule {
        &self.weight
    }

    /// U-learner denominators that were raised to the floor.
    pub fn floor_events(&self) -> usize {
        self.floor_events
    }

    pub fn predict_one(&self, x: &[f64]) -> f64 {
        match self.kind {
            CateKind::S => {
                let mu = self.mu.as_deref().expect("S model");
                let mut z = x.to_vec();
                z.push(1.0);
                let a = mu.predict_one(&z);
                z[self.dim] = 0.0;
                a - mu.predict_one(&z)
            }
            CateKind::T => {
                self.mu1.as_deref().expect("T model").predict_one(x)
                    - self.mu0.as_deref().expect("T model").predict_one(x)
            }
            CateKind::X => {
                let g = self.weight.weight(x);
                let t1 = self.tau1.as_deref().expect("X model").predict_one(x);
                let t0 = self.tau0.as_deref().map_or(0.0, |m| m.predict_one(x));
                g * t0 + (1.0 - g) * t1
            }
            CateKind::F | CateKind::U => self.tau.as_deref().expect("F/U model").predict_one(x),
        }
    }

    /// Prediction with the X-learner weight replaced by `weight`.
    pub fn predict_with_weight(&self, xs: &Matrix, weight: &WeightRule) -> Result<Vec<f64>> {
        self.check_dim(xs)?;
        if self.kind != CateKind::X {
            return Err(Error::Unsupported("weight override needs an X-learner".into()));
        }
        self.combine_x(xs, weight)
    }

    fn combine_x(&self, xs: &Matrix, weight: &WeightRule) -> Result<Vec<f64>> {
        let g = weight.weights(xs);
        let t1 = self.tau1.as_deref().expect("X model").predict(xs);
        let needs_t0 = g.iter().any(|&v| v != 0.0);
        let t0 = match (&self.tau0, needs_t0) {
            (Some(m), true) => m.predict(xs),
            (None, true) => {
                return Err(Error::Unsupported(
                    "treated-arm X-learner only supports weight zero".into(),
                ))
            }
            _ => vec![0.0; xs.rows()],
        };
        Ok((0..xs.rows())
            .map(|i| g[i] * t0[i] + (1.0 - g[i]) * t1[i])
            .collect())
    }

    fn check_dim(&self, xs: &Matrix) -> Result<()> {
        if xs.cols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: xs.cols(),
            });
        }
        Ok(())
    }
}

/// Vectorized CATE prediction in row order.
pub fn predict_cate(model: &CateModel, xs: &Matrix) -> Result<Vec<f64>> {
    model.check_dim(xs)?;
    match model.kind {
        CateKind::S => {
            let mu = model.mu.as_deref().expect("S model");
            let a = mu.predict(&xs.with_column(&vec![1.0; xs.rows()])?);
            let b = mu.predict(&xs.with_column(&vec![0.0; xs.rows()])?);
            Ok(a.iter().zip(&b).map(|(p, q)| p - q).collect())
        }
        CateKind::T => {
            let (a, b) = rayon::join(
                || model.mu1.as_deref().expect("T model").predict(xs),
                || model.mu0.as_deref().expect("T model").predict(xs),
            );
            Ok(a.iter().zip(&b).map(|(p, q)| p - q).collect())
        }
        CateKind::X => model.combine_x(xs, &model.weight),
        CateKind::F | CateKind::U => Ok(model.tau.as_deref().expect("F/U model").predict(xs)),
    }
}

type ArmData = (Matrix, Vec<f64>);

fn split_arms(ds: &Dataset) -> Result<(ArmData, ArmData)> {
    let control = ds.arm(Arm::Control);
    if control.1.is_empty() {
        return Err(Error::EmptyArm(Arm::Control));
    }
    let treated = ds.arm(Arm::Treated);
    if treated.1.is_empty() {
        return Err(Error::EmptyArm(Arm::Treated));
    }
    Ok((control, treated))
}

/// T-learner: `mu1_hat(x) - mu0_hat(x)` with each arm fitted separately.
pub fn fit_t(ds: &Dataset, base_control: &dyn Regressor, base_treated: &dyn Regressor) -> Result<CateModel> {
    let ((x0, y0), (x1, y1)) = split_arms(ds)?;
    let (mu0, mu1) = rayon::join(|| base_control.fit(&x0, &y0), || base_treated.fit(&x1, &y1));
    let mut m = CateModel::empty(CateKind::T, ds.dim());
    m.mu0 = Some(mu0?);
    m.mu1 = Some(mu1?);
    Ok(m)
}

/// S-learner: one regression on `(x, w)`, contrasted at `w = 1` and `w = 0`.
pub fn fit_s(ds: &Dataset, base: &dyn Regressor) -> Result<CateModel> {
    if ds.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let xw = ds.features().with_column(&ds.treatment_f64())?;
    let mut m = CateModel::empty(CateKind::S, ds.dim());
    m.mu = Some(base.fit(&xw, ds.outcome())?);
    Ok(m)
}

pub fn impute_effects(
    ds: &Dataset,
    mu0_hat: &dyn FittedRegressor,
    mu1_hat: &dyn FittedRegressor,
) -> ImputedEffects {
    let (x0, y0) = ds.arm(Arm::Control);
    let (x1, y1) = ds.arm(Arm::Treated);
    let (p0, p1) = rayon::join(|| mu0_hat.predict(&x1), || mu1_hat.predict(&x0));
    ImputedEffects {
        d_treated: y1.iter().zip(&p0).map(|(y, m)| y - m).collect(),
        d_control: p1.iter().zip(&y0).map(|(m, y)| m - y).collect(),
    }
}

/// X-learner slots.
#[derive(Debug, Clone, Copy)]
pub struct XBases<'a> {
    pub mu0: &'a dyn Regressor,
    pub mu1: &'a dyn Regressor,
    pub tau0: &'a dyn Regressor,
    pub tau1: &'a dyn Regressor,
}

impl<'a> XBases<'a> {
    pub fn uniform(base: &'a dyn Regressor) -> Self {
        Self {
            mu0: base,
            mu1: base,
            tau0: base,
            tau1: base,
        }
    }
}

pub fn fit_x(ds: &Dataset, bases: XBases<'_>, weight: WeightRule) -> Result<CateModel> {
    let ((x0, y0), (x1, y1)) = split_arms(ds)?;
    let (mu0, mu1) = rayon::join(|| bases.mu0.fit(&x0, &y0), || bases.mu1.fit(&x1, &y1));
    let (mu0, mu1) = (mu0?, mu1?);
    let (p0, p1) = rayon::join(|| mu0.predict(&x1), || mu1.predict(&x0));
    let d1: Vec<f64> = y1.iter().zip(&p0).map(|(y, m)| y - m).collect();
    let d0: Vec<f64> = p1.iter().zip(&y0).map(|(m, y)| m - y).collect();
    let (tau0, tau1) = rayon::join(|| bases.tau0.fit(&x0, &d0), || bases.tau1.fit(&x1, &d1));
    let mut m = CateModel::empty(CateKind::X, ds.dim());
    m.mu0 = Some(mu0);
    m.mu1 = Some(mu1);
    m.tau0 = Some(tau0?);
    m.tau1 = Some(tau1?);
    m.weight = weight;
    Ok(m)
}

/// The X-learner with `g = 0`: only `mu0_hat` and `tau1_hat` are fitted.
/// Predictions equal [`fit_x`] with [`WeightRule::Zero`] and the same slots.
pub fn fit_x_treated_arm(ds: &Dataset, base_mu0: &dyn Regressor, base_tau1: &dyn Regressor) -> Result<CateModel> {
    let ((x0, y0), (x1, y1)) = split_arms(ds)?;
    let mu0 = base_mu0.fit(&x0, &y0)?;
    drop(x0);
    let p0 = mu0.predict(&x1);
    let d1: Vec<f64> = y1.iter().zip(&p0).map(|(y, m)| y - m).collect();
    let mut m = CateModel::empty(CateKind::X, ds.dim());
    m.tau1 = Some(base_tau1.fit(&x1, &d1)?);
    m.mu0 = Some(mu0);
    Ok(m)
}

/// Transformed outcomes `Y * (W - e) / (e (1 - e))`.
pub fn transformed_outcome(ds: &Dataset, prop: &PropensityModel) -> Result<Vec<f64>> {
    let e = prop.predict(ds.features());
    let w = ds.treatment_f64();
    let mut out = Vec::with_capacity(ds.len());
    for (row, ((&y, &wi), &ei)) in ds.outcome().iter().zip(&w).zip(&e).enumerate() {
        let denom = ei * (1.0 - ei);
        if !(ei > 0.0 && ei < 1.0 && denom > 0.0) {
            return Err(Error::DivisionGuard { row, value: ei });
        }
        out.push(y * (wi - ei) / denom);
    }
    Ok(out)
}

pub fn fit_f(ds: &Dataset, prop: &PropensityModel, base_tau: &dyn Regressor) -> Result<CateModel> {
    let ystar = transformed_outcome(ds, prop)?;
    let mut m = CateModel::empty(CateKind::F, ds.dim());
    m.tau = Some(base_tau.fit(ds.features(), &ystar)?);
    m.propensity = Some(prop.clone());
    Ok(m)
}

pub fn fit_u(
    ds: &Dataset,
    base_obs: &dyn Regressor,
    prop: &PropensityModel,
    base_tau: &dyn Regressor,
    denom_floor: f64,
) -> Result<CateModel> {
    if !(denom_floor > 0.0 && denom_floor < 1.0) {
        return Err(Error::InvalidArgument(format!("denominator floor {denom_floor} outside (0,1)")));
    }
    let mu_obs = base_obs.fit(ds.features(), ds.outcome())?;
    let fitted = mu_obs.predict(ds.features());
    let e = prop.predict(ds.features());
    let mut floor_events = 0;
    let r: Vec<f64> = (0..ds.len())
        .map(|i| {
            let w = ds.treatment()[i];
            let mut denom = f64::from(u8::from(w)) - e[i];
            if denom.abs() < denom_floor || !denom.is_finite() {
                floor_events += 1;
                denom = if w { denom_floor } else { -denom_floor };
            }
            (ds.outcome()[i] - fitted[i]) / denom
        })
        .collect();
    let mut m = CateModel::empty(CateKind::U, ds.dim());
    m.tau = Some(base_tau.fit(ds.features(), &r)?);
    m.mu_obs = Some(mu_obs);
    m.propensity = Some(prop.clone());
    m.floor_events = floor_events;
    Ok(m)
}

/// Anything that predicts a CATE at new points.
pub trait CateEstimator: Send + Sync + fmt::Debug {
    fn predict(&self, xs: &Matrix) -> Result<Vec<f64>>;
}

impl CateEstimator for CateModel {
    fn predict(&self, xs: &Matrix) -> Result<Vec<f64>> {
        predict_cate(self, xs)
    }
}

/// A learner configuration that can be refit on new data.
pub trait CateLearner: Send + Sync + fmt::Debug {
    fn fit(&self, ds: &Dataset) -> Result<Box<dyn CateEstimator>>;
    fn name(&self) -> String;
}

/// Where F-, U- and X-learners get `e(x)`.
#[derive(Clone)]
pub enum PropensitySource {
    Known(FeatureFn),
    Estimate { method: PropensityMethod, clip: f64 },
}

impl fmt::Debug for PropensitySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PropensitySource::Known(_) => f.write_str("Known"),
            PropensitySource::Estimate { method, clip } => f
                .debug_struct("Estimate")
                .field("method", method)
                .field("clip", clip)
                .finish(),
        }
    }
}

impl Default for PropensitySource {
    fn default() -> Self {
        PropensitySource::Estimate {
            method: PropensityMethod::Forest(Default::default()),
            clip: DEFAULT_PROPENSITY_CLIP,
        }
    }
}

impl PropensitySource {
    pub fn resolve(&self, ds: &Dataset) -> Result<PropensityModel> {
        match self {
            PropensitySource::Known(e) => Ok(PropensityModel::known(e.clone())),
            PropensitySource::Estimate { method, clip } => {
                fit_propensity(ds.features(), ds.treatment(), *method, *clip)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum WeightChoice {
    Zero,
    One,
    Constant(f64),
    Propensity,
}

pub type Base = Arc<dyn Regressor>;

/// A meta-learner configuration with its base learners.
#[derive(Debug, Clone)]
pub enum MetaLearner {
    S {
        base: Base,
    },
    T {
        mu0: Base,
        mu1: Base,
    },
    X {
        mu0: Base,
        mu1: Base,
        tau0: Base,
        tau1: Base,
        weight: WeightChoice,
        propensity: PropensitySource,
    },
    F {
        tau: Base,
        propensity: PropensitySource,
    },
    U {
        obs: Base,
        tau: Base,
        propensity: PropensitySource,
        floor: f64,
    },
}

impl MetaLearner {
    pub fn kind(&self) -> CateKind {
        match self {
            MetaLearner::S { .. } => CateKind::S,
            MetaLearner::T { .. } => CateKind::T,
            MetaLearner::X { .. } => CateKind::X,
            MetaLearner::F { .. } => CateKind::F,
            MetaLearner::U { .. } => CateKind::U,
        }
    }

    pub fn fit_model(&self, ds: &Dataset) -> Result<CateModel> {
        match self {
            MetaLearner::S { base } => fit_s(ds, base.as_ref()),
            MetaLearner::T { mu0, mu1 } => fit_t(ds, mu0.as_ref(), mu1.as_ref()),
            MetaLearner::X {
                mu0,
                mu1,
                tau0,
                tau1,
                weight,
                propensity,
            } => {
                let weight = match weight {
                    WeightChoice::Zero => WeightRule::Zero,
                    WeightChoice::One => WeightRule::One,
                    WeightChoice::Constant(c) => WeightRule::constant(*c)?,
                    WeightChoice::Propensity => WeightRule::Propensity(propensity.resolve(ds)?),
                };
                let bases = XBases {
                    mu0: mu0.as_ref(),
                    mu1: mu1.as_ref(),
                    tau0: tau0.as_ref(),
                    tau1: tau1.as_ref(),
                };
                fit_x(ds, bases, weight)
            }
            MetaLearner::F { tau, propensity } => fit_f(ds, &propensity.resolve(ds)?, tau.as_ref()),
            MetaLearner::U {
                obs,
                tau,
                propensity,
                floor,
            } => fit_u(ds, obs.as_ref(), &propensity.resolve(ds)?, tau.as_ref(), *floor),
        }
    }

    /// Replaces every estimated propensity with the known function `e`.
    pub fn with_known_propensity(mut self, e: FeatureFn) -> Self {
        match &mut self {
            MetaLearner::X { propensity, .. }
            | MetaLearner::F { propensity, .. }
            | MetaLearner::U { propensity, .. } => *propensity = PropensitySource::Known(e),
            _ => {}
        }
        self
    }
}

impl CateLearner for MetaLearner {
    fn fit(&self, ds: &Dataset) -> Result<Box<dyn CateEstimator>> {
        Ok(Box::new(self.fit_model(ds)?))
    }

    fn name(&self) -> String {
        match self {
            MetaLearner::S { base } => format!("s-{}", base.tag()),
            MetaLearner::T { mu0, mu1 } => slot_name("t", &[("mu0", mu0), ("mu1", mu1)]),
            MetaLearner::X {
                mu0, mu1, tau0, tau1, ..
            } => slot_name("x", &[("mu0", mu0), ("mu1", mu1), ("tau0", tau0), ("tau1", tau1)]),
            MetaLearner::F { tau, .. } => format!("f-{}", tau.tag()),
            MetaLearner::U { obs, tau, .. } => slot_name("u", &[("obs", obs), ("tau", tau)]),
        }
    }
}

fn slot_name(meta: &str, slots: &[(&str, &Base)]) -> String {
    let first = slots[0].1.tag();
    let mut name = format!("{meta}-{first}");
    let overrides: Vec<String> = slots
        .iter()
        .filter(|(_, b)| b.tag() != first)
        .map(|(s, b)| format!("{s}={}", b.tag()))
        .collect();
    if !overrides.is_empty() {
        name.push(':');
        name.push_str(&overrides.join(","));
    }
    name
}

/// Predicts a fixed function of `x`, ignoring the data.
#[derive(Clone)]
pub struct FunctionEstimator {
    f: FeatureFn,
}

impl fmt::Debug for FunctionEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FunctionEstimator")
    }
}

impl CateEstimator for FunctionEstimator {
    fn predict(&self, xs: &Matrix) -> Result<Vec<f64>> {
        Ok(xs.iter_rows().map(|x| (self.f)(x)).collect())
    }
}

/// Returns the true CATE of a synthetic DGP whatever the data.
#[derive(Clone)]
pub struct OracleLearner {
    tau: FeatureFn,
}

impl OracleLearner {
    pub fn new(tau: FeatureFn) -> Self {
        Self { tau }
    }

    pub fn for_spec(spec: &crate::dgp::SimulationSpec) -> Self {
        let (mu0, mu1) = (spec.mu0.clone(), spec.mu1.clone());
        Self::new(Arc::new(move |x| mu1(x) - mu0(x)))
    }
}

impl fmt::Debug for OracleLearner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("OracleLearner")
    }
}

impl CateLearner for OracleLearner {
    fn fit(&self, _ds: &Dataset) -> Result<Box<dyn CateEstimator>> {
        Ok(Box::new(FunctionEstimator { f: self.tau.clone() }))
    }

    fn name(&self) -> String {
        "oracle".into()
    }
}

/// Predicts the same constant everywhere.
#[derive(Debug, Clone, Copy)]
pub struct ConstantLearner(pub f64);

impl CateLearner for ConstantLearner {
    fn fit(&self, _ds: &Dataset) -> Result<Box<dyn CateEstimator>> {
        let c = self.0;
        Ok(Box::new(FunctionEstimator { f: Arc::new(move |_| c) }))
    }

    fn name(&self) -> String {
        format!("constant{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{MeanRegressor, OlsRegressor};

    fn ds(rows: &[[f64; 1]], w: &[bool], y: &[f64]) -> Dataset {
        Dataset::new(Matrix::from_rows(rows).unwrap(), w.to_vec(), y.to_vec()).unwrap()
    }

    #[test]
    fn empty_arm_is_named() {
        let d = ds(&[[0.0], [1.0]], &[false, false], &[1.0, 2.0]);
        assert!(matches!(
            fit_t(&d, &MeanRegressor, &MeanRegressor),
            Err(Error::EmptyArm(Arm::Treated))
        ));
        let d = ds(&[[0.0], [1.0]], &[true, true], &[1.0, 2.0]);
        let b = XBases::uniform(&MeanRegressor);
        assert!(matches!(fit_x(&d, b, WeightRule::Zero), Err(Error::EmptyArm(Arm::Control))));
    }

    #[test]
    fn t_learner_arm_means() {
        let d = ds(&[[0.0], [1.0], [2.0], [3.0]], &[false, true, false, true], &[0.0, 3.0, 0.0, 3.0]);
        let m = fit_t(&d, &MeanRegressor, &MeanRegressor).unwrap();
        let p = predict_cate(&m, &Matrix::column_vector(&[-1.0, 10.0])).unwrap();
        assert_eq!(p, vec![3.0, 3.0]);
    }

    #[test]
    fn s_learner_ols_recovers_w_coefficient() {
        let x = [[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]];
        let w = [false, true, false, true, true, false];
        let y: Vec<f64> = x.iter().zip(&w).map(|(x, &w)| x[0] + 2.0 * f64::from(u8::from(w))).collect();
        let m = fit_s(&ds(&x, &w, &y), &OlsRegressor::default()).unwrap();
        for v in predict_cate(&m, &Matrix::column_vector(&[-3.0, 0.5, 7.0])).unwrap() {
            assert!((v - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let d = ds(&[[0.0], [1.0]], &[false, true], &[1.0, 2.0]);
        let m = fit_t(&d, &MeanRegressor, &MeanRegressor).unwrap();
        assert!(matches!(
            predict_cate(&m, &Matrix::zeros(1, 2)),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn f_learner_symmetric_propensity() {
        let d = ds(&[[0.0], [1.0]], &[true, false], &[3.0, 5.0]);
        let y = transformed_outcome(&d, &PropensityModel::constant(0.5)).unwrap();
        assert_eq!(y, vec![6.0, -10.0]);
    }

    #[test]
    fn f_learner_division_guard() {
        let d = ds(&[[0.0], [1.0]], &[true, false], &[3.0, 5.0]);
        assert!(matches!(
            fit_f(&d, &PropensityModel::constant(1.0), &MeanRegressor),
            Err(Error::DivisionGuard { row: 0, .. })
        ));
    }

    #[test]
    fn u_learner_floor_counts() {
        let d = ds(&[[0.0], [1.0], [2.0]], &[true, false, true], &[3.0, 5.0, 1.0]);
        let m = fit_u(&d, &MeanRegressor, &PropensityModel::constant(0.5), &MeanRegressor, 0.05).unwrap();
        assert_eq!(m.floor_events(), 0);
        let m = fit_u(&d, &MeanRegressor, &PropensityModel::constant(0.98), &MeanRegressor, 0.05).unwrap();
        assert_eq!(m.floor_events(), 2);
    }

    #[test]
    fn learner_names() {
        let rf: Base = Arc::new(crate::learners::ForestParams::default());
        let ols: Base = Arc::new(OlsRegressor::default());
        let x = MetaLearner::X {
            mu0: rf.clone(),
            mu1: rf.clone(),
            tau0: ols.clone(),
            tau1: ols,
            weight: WeightChoice::Propensity,
            propensity: PropensitySource::default(),
        };
        assert_eq!(x.name(), "x-rf:tau0=ols,tau1=ols");
        assert_eq!(MetaLearner::S { base: rf }.name(), "s-rf");
    }
}

//! Synthetic data-generating processes with known ground truth.
//!
//! A [`SimulationSpec`] bundles a feature law, a propensity score `e(x)` and
//! the two response surfaces `mu0`, `mu1`. Drawing a dataset follows the
//! usual three steps: features, then both potential outcomes, then the
//! treatment assignment `W ~ Bern(e(X))`. Every generator is a pure function
//! of its arguments and seed.

use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Beta, Distribution, StandardNormal, Uniform};

use crate::data::{Dataset, GroundTruth};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, rng_from_seed, Rng};

/// A scalar function of a feature vector (propensity or response surface).
pub type FeatureFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Spec-level seed used by [`builtin_spec`] to freeze `Sigma` and the
/// coefficient vectors.
pub const DEFAULT_SPEC_SEED: u64 = 20_170_001;

/// Default Beta concentration for vine partial correlations.
pub const DEFAULT_VINE_CONCENTRATION: f64 = 2.0;

/// Default cap on consecutive rejected proposals in the conditional sampler.
pub const DEFAULT_REJECTION_CAP: u64 = 1_000_000;

/// Symmetric, unit-diagonal, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self { dim, entries }
    }

    /// Validates symmetry, the unit diagonal and the off-diagonal range.
    /// Positive semidefiniteness is checked lazily by [`Self::cholesky`].
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::InvalidDimension("correlation matrix of size 0".into()));
        }
        let mut entries = Vec::with_capacity(dim * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::InvalidDimension("correlation matrix must be square".into()));
            }
            entries.extend_from_slice(r);
        }
        for i in 0..dim {
            if (entries[i * dim + i] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..dim {
                let v = entries[i * dim + j];
                if !(-1.0..=1.0).contains(&v) || (v - entries[j * dim + i]).abs() > 1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "entry ({i},{j}) breaks symmetry or lies outside [-1,1]"
                    )));
                }
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let m = nalgebra::DMatrix::from_row_slice(self.dim, self.dim, &self.entries);
        let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Lower-triangular factor `L` with `L L^T = Sigma`, row-major.
    pub fn cholesky(&self) -> Result<Vec<f64>> {
        let m = nalgebra::DMatrix::from_row_slice(self.dim, self.dim, &self.entries);
        let chol = m.cholesky().ok_or(Error::NotPositiveDefinite)?;
        let l = chol.l();
        let mut out = vec![0.0; self.dim * self.dim];
        for i in 0..self.dim {
            for j in 0..=i {
                out[i * self.dim + j] = l[(i, j)];
            }
        }
        Ok(out)
    }
}

/// Random correlation matrix by the vine construction: partial correlations
/// along a C-vine are drawn from `Beta(c, c)` rescaled to `(-1, 1)` and
/// converted to raw correlations by the partial-correlation recursion.
pub fn vine_correlation(d: usize, concentration: f64, seed: u64) -> Result<CorrelationMatrix> {
    if d == 0 {
        return Err(Error::InvalidDimension("vine correlation needs d >= 1".into()));
    }
    if concentration.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::InvalidArgument("concentration must be positive".into()));
    }
    let beta = Beta::new(concentration, concentration)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = rng_from_seed(seed);
    let mut partial = vec![0.0; d * d];
    let mut corr = CorrelationMatrix::identity(d);
    for k in 0..d.saturating_sub(1) {
        for i in (k + 1)..d {
            let p = 2.0 * beta.sample(&mut rng) - 1.0;
            partial[k * d + i] = p;
            let mut r = p;
            for l in (0..k).rev() {
                let pli = partial[l * d + i];
                let plk = partial[l * d + k];
                r = r * ((1.0 - pli * pli) * (1.0 - plk * plk)).sqrt() + pli * plk;
            }
            let r = r.clamp(-1.0, 1.0);
            corr.entries[k * d + i] = r;
            corr.entries[i * d + k] = r;
        }
    }
    Ok(corr)
}

/// Marginal law of the features.
#[derive(Clone)]
pub enum FeatureLaw {
    /// `N(0, Sigma)`; the Cholesky factor is cached.
    Gaussian {
        sigma: CorrelationMatrix,
        chol: Vec<f64>,
    },
    /// `Unif([0,1]^d)`.
    UniformCube,
}

impl FeatureLaw {
    pub fn gaussian(sigma: CorrelationMatrix) -> Result<Self> {
        let chol = sigma.cholesky()?;
        Ok(Self::Gaussian { sigma, chol })
    }

    pub fn standard_gaussian(d: usize) -> Self {
        Self::gaussian(CorrelationMatrix::identity(d)).expect("identity is positive definite")
    }

    fn fill(&self, rng: &mut Rng, out: &mut [f64], scratch: &mut [f64]) {
        match self {
            FeatureLaw::Gaussian { chol, .. } => {
                let d = out.len();
                for z in scratch.iter_mut() {
                    *z = rng.sample(StandardNormal);
                }
                for i in 0..d {
                    let row = &chol[i * d..i * d + i + 1];
                    out[i] = row.iter().zip(scratch.iter()).map(|(a, b)| a * b).sum();
                }
            }
            FeatureLaw::UniformCube => {
                let u = Uniform::new(0.0, 1.0);
                for v in out.iter_mut() {
                    *v = u.sample(rng);
                }
            }
        }
    }
}

impl fmt::Debug for FeatureLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureLaw::Gaussian { sigma, .. } => write!(f, "Gaussian(dim={})", sigma.dim()),
            FeatureLaw::UniformCube => f.write_str("UniformCube"),
        }
    }
}

/// `n` iid rows from `N(0, Sigma)` via the lower-triangular factor.
pub fn sample_features(n: usize, sigma: &CorrelationMatrix, seed: u64) -> Result<Matrix> {
    let law = FeatureLaw::gaussian(sigma.clone())?;
    let d = sigma.dim();
    let mut rng = rng_from_seed(seed);
    let mut m = Matrix::zeros(n, d);
    let mut scratch = vec![0.0; d];
    for i in 0..n {
        law.fill(&mut rng, m.row_mut(i), &mut scratch);
    }
    Ok(m)
}

/// A complete data-generating process.
#[derive(Clone)]
pub struct SimulationSpec {
    pub name: String,
    pub dim: usize,
    pub propensity: FeatureFn,
    pub mu0: FeatureFn,
    pub mu1: FeatureFn,
    pub feature_law: FeatureLaw,
    pub noise_sd: f64,
    /// Correlation between `eps(0)` and `eps(1)`.
    pub noise_correlation: f64,
}

impl fmt::Debug for SimulationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimulationSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("feature_law", &self.feature_law)
            .field("noise_sd", &self.noise_sd)
            .field("noise_correlation", &self.noise_correlation)
            .finish_non_exhaustive()
    }
}

impl SimulationSpec {
    pub fn tau(&self, x: &[f64]) -> f64 {
        (self.mu1)(x) - (self.mu0)(x)
    }

    pub fn with_constant_propensity(mut self, e: f64) -> Self {
        self.propensity = Arc::new(move |_| e);
        self
    }

    pub fn with_noise_sd(mut self, sd: f64) -> Self {
        self.noise_sd = sd;
        self
    }

    pub fn with_noise_correlation(mut self, rho: f64) -> Self {
        self.noise_correlation = rho;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidDimension("spec dimension must be positive".into()));
        }
        if let FeatureLaw::Gaussian { sigma, .. } = &self.feature_law {
            if sigma.dim() != self.dim {
                return Err(Error::InvalidDimension("Sigma does not match spec dimension".into()));
            }
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidArgument("noise_sd must be finite and >= 0".into()));
        }
        if !(-1.0..=1.0).contains(&self.noise_correlation) {
            return Err(Error::InvalidArgument("noise_correlation must lie in [-1,1]".into()));
        }
        Ok(())
    }

    /// Features and true CATE for `n` fresh draws of `X` (for test sets).
    pub fn draw_test_points(&self, n: usize, seed: u64) -> Result<(Matrix, Vec<f64>)> {
        self.validate()?;
        let mut rng = rng_from_seed(seed);
        let mut x = Matrix::zeros(n, self.dim);
        let mut scratch = vec![0.0; self.dim];
        for i in 0..n {
            self.feature_law.fill(&mut rng, x.row_mut(i), &mut scratch);
        }
        let tau = x.iter_rows().map(|r| self.tau(r)).collect();
        Ok((x, tau))
    }
}

/// One simulated unit before it is placed in a dataset.
struct Unit {
    x: Vec<f64>,
    w: bool,
    mu0: f64,
    mu1: f64,
    e: f64,
    y0: f64,
    y1: f64,
}

struct UnitSampler<'a> {
    spec: &'a SimulationSpec,
    scratch: Vec<f64>,
    rho_c: f64,
}

impl<'a> UnitSampler<'a> {
    fn new(spec: &'a SimulationSpec) -> Self {
        let rho = spec.noise_correlation;
        Self {
            spec,
            scratch: vec![0.0; spec.dim],
            rho_c: (1.0 - rho * rho).max(0.0).sqrt(),
        }
    }

    /// Features, then potential outcomes, then the treatment draw.
    fn draw(&mut self, rng: &mut Rng) -> Result<Unit> {
        let spec = self.spec;
        let mut x = vec![0.0; spec.dim];
        spec.feature_law.fill(rng, &mut x, &mut self.scratch);
        let mu0 = (spec.mu0)(&x);
        let mu1 = (spec.mu1)(&x);
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        let eps0 = spec.noise_sd * z0;
        let eps1 = spec.noise_sd * (spec.noise_correlation * z0 + self.rho_c * z1);
        let e = (spec.propensity)(&x);
        if !(e > 0.0 && e < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "propensity {e} outside (0,1) in spec `{}`",
                spec.name
            )));
        }
        let w = rng.gen::<f64>() < e;
        Ok(Unit {
            x,
            w,
            mu0,
            mu1,
            e,
            y0: mu0 + eps0,
            y1: mu1 + eps1,
        })
    }
}

fn assemble(dim: usize, units: Vec<Unit>) -> Result<(Dataset, GroundTruth)> {
    let n = units.len();
    let mut x = Matrix::zeros(n, dim);
    let mut w = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut truth = GroundTruth {
        mu0: Vec::with_capacity(n),
        mu1: Vec::with_capacity(n),
        tau: Vec::with_capacity(n),
        propensity: Vec::with_capacity(n),
        y0: Vec::with_capacity(n),
        y1: Vec::with_capacity(n),
        ite: Vec::with_capacity(n),
    };
    for (i, u) in units.into_iter().enumerate() {
        x.row_mut(i).copy_from_slice(&u.x);
        w.push(u.w);
        y.push(if u.w { u.y1 } else { u.y0 });
        truth.mu0.push(u.mu0);
        truth.mu1.push(u.mu1);
        truth.tau.push(u.mu1 - u.mu0);
        truth.propensity.push(u.e);
        truth.y0.push(u.y0);
        truth.y1.push(u.y1);
        truth.ite.push(u.y1 - u.y0);
    }
    Ok((Dataset::new(x, w, y)?, truth))
}

/// `n_total` iid units from `spec`.
pub fn draw_dataset(spec: &SimulationSpec, n_total: usize, seed: u64) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    let mut rng = rng_from_seed(seed);
    let mut sampler = UnitSampler::new(spec);
    let units = (0..n_total)
        .map(|_| sampler.draw(&mut rng))
        .collect::<Result<Vec<_>>>()?;
    assemble(spec.dim, units)
}

/// Exactly `n_treated` treated and `m_control` control units from the law
/// of `spec` conditioned on the treated count.
///
/// Joint draws are proposed one unit at a time and kept only while their arm
/// still has room. Given the counts, the treated units are iid from the law
/// of `(X, Y)` given `W = 1` and likewise for control, so the kept units
/// follow the conditional law exactly. Rows are shuffled at the end so that
/// positions are exchangeable.
pub fn draw_dataset_conditional(
    spec: &SimulationSpec,
    n_treated: usize,
    m_control: usize,
    seed: u64,
) -> Result<(Dataset, GroundTruth)> {
    draw_dataset_conditional_capped(spec, n_treated, m_control, seed, DEFAULT_REJECTION_CAP)
}

/// [`draw_dataset_conditional`] with an explicit cap on consecutive
/// rejected proposals.
pub fn draw_dataset_conditional_capped(
    spec: &SimulationSpec,
    n_treated: usize,
    m_control: usize,
    seed: u64,
    rejection_cap: u64,
) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    if n_treated == 0 || m_control == 0 {
        return Err(Error::InvalidArgument(
            "conditional sampling needs at least one unit per arm".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let mut sampler = UnitSampler::new(spec);
    let mut units = Vec::with_capacity(n_treated + m_control);
    let (mut have_t, mut have_c) = (0usize, 0usize);
    let mut streak = 0u64;
    while have_t < n_treated || have_c < m_control {
        let u = sampler.draw(&mut rng)?;
        let keep = if u.w {
            have_t < n_treated
        } else {
            have_c < m_control
        };
        if keep {
            if u.w {
                have_t += 1;
            } else {
                have_c += 1;
            }
            units.push(u);
            streak = 0;
        } else {
            streak += 1;
            if streak >= rejection_cap {
                return Err(Error::ResourceExhausted(format!(
                    "{rejection_cap} consecutive rejected draws while filling \
                     {n_treated} treated / {m_control} control units"
                )));
            }
        }
    }
    units.shuffle(&mut rng);
    assemble(spec.dim, units)
}

fn logistic_bump(x: f64) -> f64 {
    2.0 / (1.0 + (-12.0 * (x - 0.5)).exp())
}

fn dot(x: &[f64], beta: &[f64]) -> f64 {
    x.iter().zip(beta).map(|(a, b)| a * b).sum()
}

fn uniform_vector(d: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let u = Uniform::new_inclusive(lo, hi);
    (0..d).map(|_| u.sample(&mut rng)).collect()
}

/// Simulations 1 to 6 with the default spec seed.
pub fn builtin_spec(sim_id: u32) -> Result<SimulationSpec> {
    builtin_spec_seeded(sim_id, DEFAULT_SPEC_SEED)
}

/// Simulations 1 to 6. `Sigma` and every coefficient vector are drawn once
/// from `spec_seed` and frozen in the returned spec.
pub fn builtin_spec_seeded(sim_id: u32, spec_seed: u64) -> Result<SimulationSpec> {
    let id = u64::from(sim_id);
    let gaussian = |d: usize| -> Result<FeatureLaw> {
        let sigma = vine_correlation(d, DEFAULT_VINE_CONCENTRATION, derive_seed(spec_seed, &[id, 0]))?;
        FeatureLaw::gaussian(sigma)
    };
    let coef = |k: u64, d: usize, lo: f64, hi: f64| {
        uniform_vector(d, lo, hi, derive_seed(spec_seed, &[id, k]))
    };
    let constant = |e: f64| -> FeatureFn { Arc::new(move |_| e) };
    let spec = match sim_id {
        1 => {
            let beta = coef(1, 20, -5.0, 5.0);
            let mu0: FeatureFn = Arc::new(move |x: &[f64]| {
                dot(x, &beta) + if x[0] > 0.5 { 5.0 } else { 0.0 }
            });
            let m0 = mu0.clone();
            SimulationSpec {
                name: "sim1-unbalanced".into(),
                dim: 20,
                propensity: constant(0.01),
                mu1: Arc::new(move |x: &[f64]| m0(x) + if x[1] > 0.1 { 8.0 } else { 0.0 }),
                mu0,
                feature_law: gaussian(20)?,
                noise_sd: 1.0,
                noise_correlation: 0.0,
            }
        }
        2 => {
            let beta1 = coef(1, 20, 1.0, 30.0);
            let beta0 = coef(2, 20, 1.0, 30.0);
            SimulationSpec {
                name: "sim2-complex-linear".into(),
                dim: 20,
                propensity: constant(0.5),
                mu1: Arc::new(move |x: &[f64]| dot(x, &beta1)),
                mu0: Arc::new(move |x: &[f64]| dot(x, &beta0)),
                feature_law: gaussian(20)?,
                noise_sd: 1.0,
                noise_correlation: 0.0,
            }
        }
        3 => SimulationSpec {
            name: "sim3-complex-nonlinear".into(),
            dim: 20,
            propensity: constant(0.5),
            mu1: Arc::new(|x: &[f64]| 0.5 * logistic_bump(x[0]) * logistic_bump(x[1])),
            mu0: Arc::new(|x: &[f64]| -0.5 * logistic_bump(x[0]) * logistic_bump(x[1])),
            feature_law: gaussian(20)?,
            noise_sd: 1.0,
            noise_correlation: 0.0,
        },
        4 => {
            let beta = coef(1, 5, 1.0, 30.0);
            let mu0: FeatureFn = Arc::new(move |x: &[f64]| dot(x, &beta));
            SimulationSpec {
                name: "sim4-global-linear".into(),
                dim: 5,
                propensity: constant(0.5),
                mu1: mu0.clone(),
                mu0,
                feature_law: gaussian(5)?,
                noise_sd: 1.0,
                noise_correlation: 0.0,
            }
        }
        5 => {
            let beta = coef(1, 20, -15.0, 15.0);
            let block = |lo: usize, hi: usize| -> Vec<f64> {
                beta.iter()
                    .enumerate()
                    .map(|(i, &b)| if (lo..hi).contains(&i) { b } else { 0.0 })
                    .collect()
            };
            let (bl, bm, bu) = (block(0, 5), block(5, 10), block(10, 15));
            let mu0: FeatureFn = Arc::new(move |x: &[f64]| {
                let x20 = x[19];
                if x20 < -0.4 {
                    dot(x, &bl)
                } else if x20 <= 0.4 {
                    dot(x, &bm)
                } else {
                    dot(x, &bu)
                }
            });
            SimulationSpec {
                name: "sim5-piecewise-linear".into(),
                dim: 20,
                propensity: constant(0.5),
                mu1: mu0.clone(),
                mu0,
                feature_law: gaussian(20)?,
                noise_sd: 1.0,
                noise_correlation: 0.0,
            }
        }
        6 => {
            let mu0: FeatureFn = Arc::new(|x: &[f64]| 2.0 * x[0] - 1.0);
            SimulationSpec {
                name: "sim6-beta-confounded".into(),
                dim: 20,
                propensity: Arc::new(|x: &[f64]| 0.25 * (1.0 + beta24_density(x[0]))),
                mu1: mu0.clone(),
                mu0,
                feature_law: FeatureLaw::UniformCube,
                noise_sd: 1.0,
                noise_correlation: 0.0,
            }
        }
        other => return Err(Error::UnknownSimulation(other)),
    };
    Ok(spec)
}

/// Density of Beta(2, 4): `20 x (1 - x)^3` on `[0, 1]`.
pub fn beta24_density(x: f64) -> f64 {
    if (0.0..=1.0).contains(&x) {
        20.0 * x * (1.0 - x).powi(3)
    } else {
        0.0
    }
}

/// Uniform features on `[0,1]^d` with L-Lipschitz responses and a
/// non-smooth CATE `tau(x) = (L / sqrt d) * sum |x_j - 1/2|`.
///
/// `mu0 = (L / sqrt d) * sum (x_j - |x_j - 1/2|) / 2` and `mu1 = mu0 + tau`;
/// every partial derivative of either surface is `0` or `L / sqrt d`, so both
/// gradients have norm at most `L`.
pub fn lipschitz_spec(d: usize, lipschitz: f64, noise_sd: f64) -> Result<SimulationSpec> {
    if d <= 2 {
        return Err(Error::InvalidDimension("lipschitz_spec requires d > 2".into()));
    }
    if lipschitz.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || noise_sd <= 0.0 {
        return Err(Error::InvalidArgument("lipschitz and noise_sd must be positive".into()));
    }
    let scale = lipschitz / (d as f64).sqrt();
    let mu0: FeatureFn = Arc::new(move |x: &[f64]| {
        scale * x.iter().map(|&v| 0.5 * (v - (v - 0.5).abs())).sum::<f64>()
    });
    let mu1: FeatureFn = Arc::new(move |x: &[f64]| {
        scale * x.iter().map(|&v| 0.5 * (v + (v - 0.5).abs())).sum::<f64>()
    });
    Ok(SimulationSpec {
        name: format!("lipschitz-d{d}"),
        dim: d,
        propensity: Arc::new(|_| 0.5),
        mu0,
        mu1,
        feature_law: FeatureLaw::UniformCube,
        noise_sd,
        noise_correlation: 0.0,
    })
}

/// Disjoint-feature semiparametric DGP.
///
/// Coordinates are independent standard normals. The CATE is linear in the
/// first `s` coordinates, `tau(x) = sum_{j<s} x_j`, while
/// `mu0(x) = (L / sqrt(d - s)) * sum_{j>=s} sin(x_j)` depends on the rest only.
/// The propensity is constant, so `E[X_S | W = 1] = 0`.
pub fn semiparam_spec(d: usize, s: usize, lipschitz: f64) -> Result<SimulationSpec> {
    if s == 0 || s >= d {
        return Err(Error::InvalidDimension(format!(
            "semiparam_spec needs 1 <= s < d, got s={s}, d={d}"
        )));
    }
    if lipschitz.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::InvalidArgument("lipschitz must be positive".into()));
    }
    let scale = lipschitz / ((d - s) as f64).sqrt();
    let mu0: FeatureFn = Arc::new(move |x: &[f64]| scale * x[s..].iter().map(|v| v.sin()).sum::<f64>());
    let m0 = mu0.clone();
    Ok(SimulationSpec {
        name: format!("semiparam-d{d}-s{s}"),
        dim: d,
        propensity: Arc::new(|_| 0.5),
        mu1: Arc::new(move |x: &[f64]| m0(x) + x[..s].iter().sum::<f64>()),
        mu0,
        feature_law: FeatureLaw::standard_gaussian(d),
        noise_sd: 1.0,
        noise_correlation: 0.0,
    })
}

/// Linear CATE `tau(x) = sum_j x_j` over Lipschitz responses
/// `mu0(x) = (L / sqrt d) * sum_j sin(x_j)`, standard normal features.
pub fn linear_cate_spec(d: usize, lipschitz: f64, noise_sd: f64) -> Result<SimulationSpec> {
    if d == 0 {
        return Err(Error::InvalidDimension("linear_cate_spec needs d >= 1".into()));
    }
    let scale = lipschitz / (d as f64).sqrt();
    let mu0: FeatureFn = Arc::new(move |x: &[f64]| scale * x.iter().map(|v| v.sin()).sum::<f64>());
    let m0 = mu0.clone();
    Ok(SimulationSpec {
        name: format!("linear-cate-d{d}"),
        dim: d,
        propensity: Arc::new(|_| 0.5),
        mu1: Arc::new(move |x: &[f64]| m0(x) + x.iter().sum::<f64>()),
        mu0,
        feature_law: FeatureLaw::standard_gaussian(d),
        noise_sd,
        noise_correlation: 0.0,
    })
}

/// Both responses linear with an intercept, Gaussian features, balanced
/// assignment: `mu0 = 1 + sum x_j`, `mu1 = 2 + sum (-1)^j x_j / 2`.
pub fn linear_gaussian_spec(d: usize) -> Result<SimulationSpec> {
    if d == 0 {
        return Err(Error::InvalidDimension("linear_gaussian_spec needs d >= 1".into()));
    }
    Ok(SimulationSpec {
        name: format!("linear-gaussian-d{d}"),
        dim: d,
        propensity: Arc::new(|_| 0.5),
        mu0: Arc::new(|x: &[f64]| 1.0 + x.iter().sum::<f64>()),
        mu1: Arc::new(|x: &[f64]| {
            2.0 + x
                .iter()
                .enumerate()
                .map(|(j, v)| if j % 2 == 0 { 0.5 * v } else { -0.5 * v })
                .sum::<f64>()
        }),
        feature_law: FeatureLaw::standard_gaussian(d),
        noise_sd: 1.0,
        noise_correlation: 0.0,
    })
}

/// The two DGPs whose observed-data laws coincide while their individual
/// treatment effects differ: `X ~ Unif[0,1]`, `W ~ Bern(1/2)`, Rademacher
/// `Y(0)`, and `Y(1) = Y(0)` (first) or `Y(1) = -Y(0)` (second). Both share
/// the same draws of `X`, `W` and `Y(0)`.
pub fn example1_pair(
    n_total: usize,
    seed: u64,
) -> Result<(Dataset, GroundTruth, Dataset, GroundTruth)> {
    if n_total == 0 {
        return Err(Error::InvalidArgument("n_total must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut x = Matrix::zeros(n_total, 1);
    let mut w = Vec::with_capacity(n_total);
    let mut y0 = Vec::with_capacity(n_total);
    for i in 0..n_total {
        x.set(i, 0, rng.gen::<f64>());
        w.push(rng.gen::<bool>());
        y0.push(if rng.gen::<bool>() { 1.0 } else { -1.0 });
    }
    let build = |sign: f64| -> Result<(Dataset, GroundTruth)> {
        let y1: Vec<f64> = y0.iter().map(|v| sign * v).collect();
        let y: Vec<f64> = (0..n_total).map(|i| if w[i] { y1[i] } else { y0[i] }).collect();
        let truth = GroundTruth {
            mu0: vec![0.0; n_total],
            mu1: vec![0.0; n_total],
            tau: vec![0.0; n_total],
            propensity: vec![0.5; n_total],
            ite: y1.iter().zip(&y0).map(|(a, b)| a - b).collect(),
            y0: y0.clone(),
            y1,
        };
        Ok((Dataset::new(x.clone(), w.clone(), y)?, truth))
    };
    let (d1, t1) = build(1.0)?;
    let (d2, t2) = build(-1.0)?;
    Ok((d1, t1, d2, t2))
}

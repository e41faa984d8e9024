//! Replication loops, EMSE scoring, rate fits, coverage studies and the
//! S-learner split diagnostic.

use std::fmt;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::data::{csv_field, format_float, Dataset, GroundTruth};
use crate::dgp::{
    draw_dataset, draw_dataset_conditional, lipschitz_spec, linear_cate_spec, semiparam_spec,
    SimulationSpec,
};
use crate::error::{Error, Result};
use crate::inference::{
    bootstrap_replicates, normal_from_record, smoothed_from_record, CiMethod, IntervalEstimate,
};
use crate::learners::{ColumnSubset, HonestForest, KChoice, KnnRegressor, OlsRegressor};
use crate::matrix::Matrix;
use crate::meta::{fit_x_treated_arm, Base, CateEstimator, CateLearner, CateModel, MetaLearner};
use crate::rng::{derive_seed, derived_rng};
use crate::stats::mean;

pub const DEFAULT_TEST_SIZE: usize = 10_000;
pub const DEFAULT_REPS: usize = 30;

/// Mean squared deviation of `predictions` from `truth`.
pub fn emse(predictions: &[f64], truth: &[f64]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: predictions.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    Ok(predictions
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / truth.len() as f64)
}

pub fn emse_model(model: &dyn CateEstimator, test_features: &Matrix, true_tau: &[f64]) -> Result<f64> {
    emse(&model.predict(test_features)?, true_tau)
}

/// How a training set is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SampleDesign {
    /// `n` iid units with random treatment.
    Total(usize),
    /// Exactly `n_treated` treated and `m_control` control units.
    Conditional { n_treated: usize, m_control: usize },
}

impl SampleDesign {
    pub fn n_train(&self) -> usize {
        match *self {
            SampleDesign::Total(n) => n,
            SampleDesign::Conditional {
                n_treated,
                m_control,
            } => n_treated + m_control,
        }
    }

    /// Size that indexes a rate fit: `n` for iid designs, the treated count otherwise.
    pub fn rate_size(&self) -> usize {
        match *self {
            SampleDesign::Total(n) => n,
            SampleDesign::Conditional { n_treated, .. } => n_treated,
        }
    }

    fn seed_path(&self) -> [u64; 2] {
        match *self {
            SampleDesign::Total(n) => [n as u64, u64::MAX],
            SampleDesign::Conditional {
                n_treated,
                m_control,
            } => [n_treated as u64, m_control as u64],
        }
    }

    pub fn draw(&self, spec: &SimulationSpec, seed: u64) -> Result<(Dataset, GroundTruth)> {
        match *self {
            SampleDesign::Total(n) => draw_dataset(spec, n, seed),
            SampleDesign::Conditional {
                n_treated,
                m_control,
            } => draw_dataset_conditional(spec, n_treated, m_control, seed),
        }
    }
}

/// One fitted-and-scored (learner, design, rep) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub sim: String,
    pub learner: String,
    pub design: SampleDesign,
    pub n_train: usize,
    pub n_treated: usize,
    pub m_control: usize,
    pub rep: usize,
    /// Seed of the training draw.
    pub seed: u64,
    /// Test EMSE; NaN when the fit failed.
    pub mse: f64,
    pub wall_ms: Option<f64>,
    pub error: Option<String>,
    pub train_checksum: u64,
}

impl ReplicationRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct ReplicationConfig {
    pub designs: Vec<SampleDesign>,
    pub reps: usize,
    pub test_size: usize,
    pub base_seed: u64,
    pub timing: bool,
}

pub fn train_seed(base_seed: u64, design: &SampleDesign, rep: usize) -> u64 {
    let [a, b] = design.seed_path();
    derive_seed(base_seed, &[1, a, b, rep as u64])
}

pub fn test_seed(base_seed: u64, rep: usize) -> u64 {
    derive_seed(base_seed, &[0, rep as u64])
}

/// Every learner is fitted on the same training draw for a given design
/// and rep, and scored on a test draw shared by all designs of that rep.
pub fn run_replications(
    spec: &SimulationSpec,
    sim: &str,
    learners: &[&dyn CateLearner],
    cfg: &ReplicationConfig,
) -> Result<Vec<ReplicationRecord>> {
    if cfg.reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    if cfg.test_size == 0 {
        return Err(Error::InvalidArgument("test_size must be positive".into()));
    }
    let tasks: Vec<(usize, usize)> = (0..cfg.designs.len())
        .flat_map(|d| (0..cfg.reps).map(move |r| (d, r)))
        .collect();
    let per_task: Vec<Vec<(usize, usize, ReplicationRecord)>> = tasks
        .par_iter()
        .map(|&(d, rep)| -> Result<Vec<(usize, usize, ReplicationRecord)>> {
            let design = cfg.designs[d];
            let seed = train_seed(cfg.base_seed, &design, rep);
            let (train, _) = design.draw(spec, seed)?;
            let (test_x, test_tau) = spec.draw_test_points(cfg.test_size, test_seed(cfg.base_seed, rep))?;
            let checksum = train.checksum();
            Ok(learners
                .iter()
                .enumerate()
                .map(|(li, learner)| {
                    let start = Instant::now();
                    let scored = learner
                        .fit(&train)
                        .and_then(|m| emse_model(m.as_ref(), &test_x, &test_tau));
                    let elapsed = start.elapsed().as_secs_f64() * 1e3;
                    let (mse, error) = match scored {
                        Ok(v) => (v, None),
                        Err(e) => (f64::NAN, Some(e.to_string())),
                    };
                    let rec = ReplicationRecord {
                        sim: sim.to_string(),
                        learner: learner.name(),
                        design,
                        n_train: train.len(),
                        n_treated: train.n_treated(),
                        m_control: train.n_control(),
                        rep,
                        seed,
                        mse,
                        wall_ms: cfg.timing.then_some(elapsed),
                        error,
                        train_checksum: checksum,
                    };
                    (li, d, rec)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut all: Vec<(usize, usize, ReplicationRecord)> = per_task.into_iter().flatten().collect();
    all.sort_by_key(|(li, d, r)| (*li, *d, r.rep));
    Ok(all.into_iter().map(|(_, _, r)| r).collect())
}

pub const RESULTS_CSV_HEADER: &str = "sim,learner,n_train,n_treated,m_control,rep,seed,mse,wall_ms";

pub fn write_results_csv<W: Write>(mut out: W, records: &[ReplicationRecord]) -> Result<()> {
    writeln!(out, "{RESULTS_CSV_HEADER}")?;
    for r in records {
        let (nt, mc) = match r.design {
            SampleDesign::Conditional { .. } => (r.n_treated.to_string(), r.m_control.to_string()),
            SampleDesign::Total(_) => (r.n_treated.to_string(), r.m_control.to_string()),
        };
        let mse = if r.mse.is_nan() {
            "nan".to_string()
        } else {
            format_float(r.mse)
        };
        let wall = r.wall_ms.map(|w| format!("{w:.3}")).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{nt},{mc},{},{},{mse},{wall}",
            r.sim,
            csv_field(&r.learner),
            r.n_train,
            r.rep,
            r.seed
        )?;
    }
    Ok(())
}

/// Mean test MSE per learner, in first-seen order.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerSummary {
    pub learner: String,
    pub mean_mse: f64,
    pub fits: usize,
    pub failures: usize,
}

pub fn summarize(records: &[ReplicationRecord]) -> Vec<LearnerSummary> {
    let mut names: Vec<&str> = Vec::new();
    for r in records {
        if !names.contains(&r.learner.as_str()) {
            names.push(&r.learner);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let rows: Vec<&ReplicationRecord> = records.iter().filter(|r| r.learner == name).collect();
            let ok: Vec<f64> = rows.iter().filter(|r| !r.failed()).map(|r| r.mse).collect();
            LearnerSummary {
                learner: name.to_string(),
                mean_mse: if ok.is_empty() { f64::NAN } else { mean(&ok) },
                fits: ok.len(),
                failures: rows.len() - ok.len(),
            }
        })
        .collect()
}

/// Least-squares line through `(ln n, ln mean EMSE)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub sizes: Vec<usize>,
    pub mean_emse: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

/// Fits on `(size, per-rep EMSE values)` groups; EMSE is averaged per size
/// before taking logs.
pub fn rate_fit(groups: &[(usize, Vec<f64>)]) -> Result<RateFit> {
    let mut groups: Vec<(usize, f64)> = groups
        .iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(n, v)| (*n, mean(v)))
        .collect();
    groups.sort_by_key(|g| g.0);
    groups.dedup_by_key(|g| g.0);
    if groups.len() < 2 {
        return Err(Error::InvalidArgument("rate fit needs at least 2 distinct sizes".into()));
    }
    if let Some(&(n, _)) = groups.iter().find(|(_, e)| e.is_nan() || *e <= 0.0) {
        return Err(Error::ZeroEmse(n));
    }
    let xs: Vec<f64> = groups.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = groups.iter().map(|(_, e)| e.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (mean(&xs), mean(&ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let slope_stderr = if groups.len() > 2 {
        (rss / (k - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(RateFit {
        sizes: groups.iter().map(|g| g.0).collect(),
        mean_emse: groups.iter().map(|g| g.1).collect(),
        slope,
        intercept,
        slope_stderr,
    })
}

/// [`rate_fit`] over the successful records of one learner, indexed by
/// [`SampleDesign::rate_size`].
pub fn rate_fit_records(records: &[ReplicationRecord], learner: &str) -> Result<RateFit> {
    let mut groups: Vec<(usize, Vec<f64>)> = Vec::new();
    for r in records.iter().filter(|r| r.learner == learner && !r.failed()) {
        let n = r.design.rate_size();
        match groups.iter_mut().find(|g| g.0 == n) {
            Some(g) => g.1.push(r.mse),
            None => groups.push((n, vec![r.mse])),
        }
    }
    rate_fit(&groups)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub experiment: String,
    pub learner: String,
    pub fit: RateFit,
}

pub const RATES_CSV_HEADER: &str = "experiment,learner,slope,slope_stderr,intercept";

pub fn write_rates_csv<W: Write>(mut out: W, rows: &[RateRow]) -> Result<()> {
    writeln!(out, "{RATES_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.experiment,
            csv_field(&r.learner),
            format_float(r.fit.slope),
            format_float(r.fit.slope_stderr),
            format_float(r.fit.intercept)
        )?;
    }
    Ok(())
}

/// Fraction of intervals that contain their truth.
pub fn coverage_rate(intervals: &[IntervalEstimate], truths: &[f64]) -> Result<f64> {
    if intervals.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: intervals.len(),
            got: truths.len(),
        });
    }
    if intervals.is_empty() {
        return Err(Error::InvalidArgument("no intervals".into()));
    }
    let hit = intervals.iter().zip(truths).filter(|(i, &t)| i.contains(t)).count();
    Ok(hit as f64 / intervals.len() as f64)
}

/// Per-tree share of probe points whose path never tests the treatment
/// column, and its histogram over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitHistogram {
    pub per_tree: Vec<f64>,
    /// `counts[b]` trees fall in `[b / bins, (b + 1) / bins)`; 1.0 goes to the last bin.
    pub counts: Vec<usize>,
}

impl SplitHistogram {
    /// Share of trees with fraction strictly below `t`.
    pub fn mass_below(&self, t: f64) -> f64 {
        self.per_tree.iter().filter(|&&f| f < t).count() as f64 / self.per_tree.len() as f64
    }
}

/// Probes are evaluated with the treatment column set to 0; before the
/// first test of that column the path does not depend on it.
pub fn s_split_fraction(model: &CateModel, probes: &Matrix, bins: usize) -> Result<SplitHistogram> {
    let forest = model
        .mu()
        .and_then(|m| m.as_any().downcast_ref::<HonestForest>())
        .ok_or_else(|| Error::Unsupported("split diagnostic needs an S-learner over a forest".into()))?;
    if probes.cols() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: probes.cols(),
        });
    }
    if bins == 0 || probes.is_empty() {
        return Err(Error::InvalidArgument("need at least one bin and one probe".into()));
    }
    let w_col = model.dim();
    let augmented = probes.with_column(&vec![0.0; probes.rows()])?;
    let per_tree: Vec<f64> = forest
        .trees()
        .iter()
        .map(|t| {
            let clean = augmented
                .iter_rows()
                .filter(|x| !t.path_uses_feature(x, w_col))
                .count();
            clean as f64 / probes.rows() as f64
        })
        .collect();
    let mut counts = vec![0; bins];
    for &f in &per_tree {
        counts[((f * bins as f64) as usize).min(bins - 1)] += 1;
    }
    Ok(SplitHistogram { per_tree, counts })
}

/// Settings for the permutation coverage protocol.
#[derive(Debug, Clone)]
pub struct CiSimConfig {
    pub train_size: usize,
    pub test_size: usize,
    pub b: usize,
    pub alpha: f64,
    pub reps: usize,
    pub seed: u64,
}

/// Source of the CATE treated as truth.
pub enum TruthSource<'a> {
    /// Fit this learner on the full data and adopt its predictions.
    Model(&'a dyn CateLearner),
    /// Synthetic potential outcomes and CATE.
    Synthetic(&'a GroundTruth),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub learner: String,
    pub method: CiMethod,
    pub nominal: f64,
    pub coverage: f64,
    pub mean_length: f64,
    pub mean_sigma: f64,
    pub intervals: usize,
}

/// Adopts a CATE as truth, fills in the missing potential outcomes,
/// permutes the treatment, splits off disjoint test and training sets and
/// scores normal and smoothed intervals at the test points. Both methods
/// share the same bootstrap resamples.
pub fn ci_simulation(
    ds: &Dataset,
    truth: TruthSource<'_>,
    learners: &[&dyn CateLearner],
    cfg: &CiSimConfig,
) -> Result<Vec<CoverageRow>> {
    let n = ds.len();
    if cfg.train_size + cfg.test_size > n || cfg.train_size == 0 || cfg.test_size == 0 {
        return Err(Error::InvalidArgument(format!(
            "train {} + test {} must fit in {n} rows",
            cfg.train_size, cfg.test_size
        )));
    }
    let (tau, y0, y1): (Vec<f64>, Vec<f64>, Vec<f64>) = match truth {
        TruthSource::Model(m) => {
            let tau = m.fit(ds)?.predict(ds.features())?;
            let y = ds.outcome();
            let w = ds.treatment();
            let y0 = (0..n).map(|i| if w[i] { y[i] - tau[i] } else { y[i] }).collect();
            let y1 = (0..n).map(|i| if w[i] { y[i] } else { y[i] + tau[i] }).collect();
            (tau, y0, y1)
        }
        TruthSource::Synthetic(g) => {
            if g.len() != n {
                return Err(Error::InvalidDimension("ground truth does not match the data".into()));
            }
            (g.tau.clone(), g.y0.clone(), g.y1.clone())
        }
    };
    let mut acc: Vec<[Vec<(IntervalEstimate, f64)>; 2]> = learners.iter().map(|_| [Vec::new(), Vec::new()]).collect();
    for rep in 0..cfg.reps {
        let mut rng = derived_rng(cfg.seed, &[rep as u64]);
        let mut w = ds.treatment().to_vec();
        w.shuffle(&mut rng);
        let picked = sample(&mut rng, n, cfg.test_size + cfg.train_size).into_vec();
        let (test_idx, train_idx) = picked.split_at(cfg.test_size);
        let y: Vec<f64> = train_idx.iter().map(|&i| if w[i] { y1[i] } else { y0[i] }).collect();
        let train = Dataset::new(
            ds.features().select_rows(train_idx),
            train_idx.iter().map(|&i| w[i]).collect(),
            y,
        )?;
        let test_x = ds.features().select_rows(test_idx);
        let test_tau: Vec<f64> = test_idx.iter().map(|&i| tau[i]).collect();
        for (li, learner) in learners.iter().enumerate() {
            let boot_seed = derive_seed(cfg.seed, &[rep as u64, li as u64, 7]);
            let full = learner.fit(&train)?.predict(&test_x)?;
            let rec = bootstrap_replicates(&train, *learner, &test_x, cfg.b, boot_seed, true)?;
            let normal = normal_from_record(&full, &rec, cfg.alpha);
            let smooth = smoothed_from_record(&rec, cfg.alpha);
            acc[li][0].extend(normal.into_iter().zip(test_tau.iter().copied()));
            acc[li][1].extend(smooth.into_iter().zip(test_tau.iter().copied()));
        }
    }
    let mut rows = Vec::new();
    for (li, learner) in learners.iter().enumerate() {
        for (mi, method) in [CiMethod::Normal, CiMethod::Smoothed].into_iter().enumerate() {
            let list = &acc[li][mi];
            rows.push(coverage_row(learner.name(), method, 1.0 - cfg.alpha, list));
        }
    }
    Ok(rows)
}

fn coverage_row(learner: String, method: CiMethod, nominal: f64, list: &[(IntervalEstimate, f64)]) -> CoverageRow {
    let k = list.len().max(1) as f64;
    CoverageRow {
        learner,
        method,
        nominal,
        coverage: list.iter().filter(|(i, t)| i.contains(*t)).count() as f64 / k,
        mean_length: list.iter().map(|(i, _)| i.width()).sum::<f64>() / k,
        mean_sigma: list.iter().map(|(i, _)| i.sigma).sum::<f64>() / k,
        intervals: list.len(),
    }
}

/// Coverage of both interval types for a learner refitted on fresh draws of
/// a synthetic DGP, with fixed evaluation points.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageStudy {
    pub normal: CoverageRow,
    pub smoothed: CoverageRow,
    /// Mean over datasets and points of `sigma_smoothed / sigma_normal`.
    pub mean_sigma_ratio: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn coverage_study(
    spec: &SimulationSpec,
    learner: &dyn CateLearner,
    n: usize,
    points: &Matrix,
    b: usize,
    alpha: f64,
    datasets: usize,
    seed: u64,
) -> Result<CoverageStudy> {
    let truth: Vec<f64> = points.iter_rows().map(|x| spec.tau(x)).collect();
    let per: Vec<(Vec<IntervalEstimate>, Vec<IntervalEstimate>)> = (0..datasets)
        .into_par_iter()
        .map(|r| {
            let (ds, _) = draw_dataset(spec, n, derive_seed(seed, &[r as u64, 0]))?;
            let full = learner.fit(&ds)?.predict(points)?;
            let rec = bootstrap_replicates(&ds, learner, points, b, derive_seed(seed, &[r as u64, 1]), true)?;
            Ok((normal_from_record(&full, &rec, alpha), smoothed_from_record(&rec, alpha)))
        })
        .collect::<Result<_>>()?;
    let mut normal = Vec::new();
    let mut smooth = Vec::new();
    let mut ratios = Vec::new();
    for (a, s) in per {
        for (p, (ia, is)) in a.into_iter().zip(s).enumerate() {
            if ia.sigma > 0.0 {
                ratios.push(is.sigma / ia.sigma);
            }
            normal.push((ia, truth[p]));
            smooth.push((is, truth[p]));
        }
    }
    Ok(CoverageStudy {
        normal: coverage_row(learner.name(), CiMethod::Normal, 1.0 - alpha, &normal),
        smoothed: coverage_row(learner.name(), CiMethod::Smoothed, 1.0 - alpha, &smooth),
        mean_sigma_ratio: mean(&ratios),
    })
}

pub const COVERAGE_CSV_HEADER: &str = "learner,method,nominal,coverage,mean_length,mean_sigma,intervals";

pub fn write_coverage_csv<W: Write>(mut out: W, rows: &[CoverageRow]) -> Result<()> {
    writeln!(out, "{COVERAGE_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            csv_field(&r.learner),
            r.method,
            r.nominal,
            format_float(r.coverage),
            format_float(r.mean_length),
            format_float(r.mean_sigma),
            r.intervals
        )?;
    }
    Ok(())
}

/// X-learner with `g = 0` fitted through [`fit_x_treated_arm`].
#[derive(Debug, Clone)]
pub struct TreatedArmXLearner {
    pub mu0: Base,
    pub tau1: Base,
    pub label: String,
}

impl CateLearner for TreatedArmXLearner {
    fn fit(&self, ds: &Dataset) -> Result<Box<dyn CateEstimator>> {
        Ok(Box::new(fit_x_treated_arm(ds, self.mu0.as_ref(), self.tau1.as_ref())?))
    }

    fn name(&self) -> String {
        self.label.clone()
    }
}

/// Rate experiments over a grid of sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateExperiment {
    /// Linear CATE, KNN control fit, OLS second stage, `m = n^2`.
    LinearUnbalanced,
    /// Lipschitz responses on the unit cube, KNN in both X-learner stages
    /// and in the T-learner, `m = n`.
    LipschitzKnn,
    /// The T-learner alone on the Lipschitz DGP.
    TlearnerLipschitz,
    /// Disjoint-feature DGP, KNN on the response coordinates, OLS on the
    /// effect coordinates, `m = n`.
    Semiparam,
}

impl RateExperiment {
    pub const ALL: [RateExperiment; 4] = [
        RateExperiment::LinearUnbalanced,
        RateExperiment::LipschitzKnn,
        RateExperiment::TlearnerLipschitz,
        RateExperiment::Semiparam,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            RateExperiment::LinearUnbalanced => "linear-unbalanced",
            RateExperiment::LipschitzKnn => "lipschitz-knn",
            RateExperiment::TlearnerLipschitz => "tlearner-lipschitz",
            RateExperiment::Semiparam => "semiparam",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown experiment `{s}`; expected one of {}",
                Self::ALL.map(|e| e.name()).join(", ")
            ))
        })
    }

    pub fn default_dim(&self) -> usize {
        match self {
            RateExperiment::LinearUnbalanced => 5,
            RateExperiment::LipschitzKnn | RateExperiment::TlearnerLipschitz => 3,
            RateExperiment::Semiparam => 6,
        }
    }

    pub fn default_grid(&self) -> Vec<usize> {
        match self {
            RateExperiment::LinearUnbalanced => vec![128, 256, 512, 1024, 2048],
            RateExperiment::LipschitzKnn | RateExperiment::TlearnerLipschitz => {
                vec![256, 512, 1024, 2048, 4096, 8192]
            }
            RateExperiment::Semiparam => vec![256, 512, 1024, 2048, 4096, 8192, 16384],
        }
    }

    pub fn default_reps(&self) -> usize {
        match self {
            RateExperiment::Semiparam => 50,
            _ => 20,
        }
    }

    /// Slope the theory predicts for dimension `d`.
    pub fn target_slope(&self, d: usize) -> f64 {
        match self {
            RateExperiment::LinearUnbalanced | RateExperiment::Semiparam => -1.0,
            RateExperiment::LipschitzKnn | RateExperiment::TlearnerLipschitz => -2.0 / (2.0 + d as f64),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RateConfig {
    pub experiment: RateExperiment,
    pub d: usize,
    pub sigma: f64,
    pub lipschitz: f64,
    pub grid: Vec<usize>,
    pub reps: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl RateConfig {
    pub fn new(experiment: RateExperiment) -> Self {
        Self {
            experiment,
            d: experiment.default_dim(),
            sigma: 1.0,
            lipschitz: 1.0,
            grid: experiment.default_grid(),
            reps: experiment.default_reps(),
            test_size: DEFAULT_TEST_SIZE,
            seed: 1,
        }
    }
}

/// Output of [`run_rate_experiment`].
#[derive(Debug, Clone)]
pub struct RateOutcome {
    pub records: Vec<ReplicationRecord>,
    pub fits: Vec<RateRow>,
}

pub fn run_rate_experiment(cfg: &RateConfig) -> Result<RateOutcome> {
    let mut grid = cfg.grid.clone();
    grid.sort_unstable();
    grid.dedup();
    if grid.len() < 2 {
        return Err(Error::InvalidArgument("rate experiments need at least 2 sizes".into()));
    }
    let knn: Base = Arc::new(KnnRegressor {
        k: KChoice::Rate {
            noise_var: cfg.sigma * cfg.sigma,
            lipschitz: cfg.lipschitz,
        },
    });
    let (spec, designs, learners): (SimulationSpec, Vec<SampleDesign>, Vec<Box<dyn CateLearner>>) =
        match cfg.experiment {
            RateExperiment::LinearUnbalanced => {
                let spec = linear_cate_spec(cfg.d, cfg.lipschitz, cfg.sigma)?;
                let designs = grid
                    .iter()
                    .map(|&n| SampleDesign::Conditional {
                        n_treated: n,
                        m_control: n * n,
                    })
                    .collect();
                let x = TreatedArmXLearner {
                    mu0: knn,
                    tau1: Arc::new(OlsRegressor { intercept: false }),
                    label: "x-knn:tau=ols0,g=zero".into(),
                };
                (spec, designs, vec![Box::new(x)])
            }
            RateExperiment::LipschitzKnn | RateExperiment::TlearnerLipschitz => {
                let spec = lipschitz_spec(cfg.d, cfg.lipschitz, cfg.sigma)?;
                let designs = grid
                    .iter()
                    .map(|&n| SampleDesign::Conditional {
                        n_treated: n,
                        m_control: n,
                    })
                    .collect();
                let t: Box<dyn CateLearner> = Box::new(NamedMeta {
                    label: "t-knn".into(),
                    inner: MetaLearner::T {
                        mu0: knn.clone(),
                        mu1: knn.clone(),
                    },
                });
                let learners = if cfg.experiment == RateExperiment::LipschitzKnn {
                    let x: Box<dyn CateLearner> = Box::new(TreatedArmXLearner {
                        mu0: knn.clone(),
                        tau1: knn,
                        label: "x-knn:g=zero".into(),
                    });
                    vec![x, t]
                } else {
                    vec![t]
                };
                (spec, designs, learners)
            }
            RateExperiment::Semiparam => {
                let s = (cfg.d / 3).max(1);
                let spec = semiparam_spec(cfg.d, s, cfg.lipschitz)?.with_noise_sd(cfg.sigma);
                let designs = grid
                    .iter()
                    .map(|&n| SampleDesign::Conditional {
                        n_treated: n,
                        m_control: n,
                    })
                    .collect();
                let x = TreatedArmXLearner {
                    mu0: Arc::new(ColumnSubset {
                        columns: (s..cfg.d).collect(),
                        inner: KnnRegressor {
                            k: KChoice::Rate {
                                noise_var: cfg.sigma * cfg.sigma,
                                lipschitz: cfg.lipschitz,
                            },
                        },
                    }),
                    tau1: Arc::new(ColumnSubset {
                        columns: (0..s).collect(),
                        inner: OlsRegressor { intercept: false },
                    }),
                    label: "x-knn:tau=ols0,g=zero".into(),
                };
                (spec, designs, vec![Box::new(x)])
            }
        };
    let refs: Vec<&dyn CateLearner> = learners.iter().map(|l| l.as_ref()).collect();
    let rep_cfg = ReplicationConfig {
        designs,
        reps: cfg.reps,
        test_size: cfg.test_size,
        base_seed: cfg.seed,
        timing: false,
    };
    let records = run_replications(&spec, cfg.experiment.name(), &refs, &rep_cfg)?;
    let fits = refs
        .iter()
        .map(|l| {
            Ok(RateRow {
                experiment: cfg.experiment.name().into(),
                learner: l.name(),
                fit: rate_fit_records(&records, &l.name())?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(RateOutcome { records, fits })
}

/// A [`MetaLearner`] with a fixed display name.
#[derive(Debug, Clone)]
pub struct NamedMeta {
    pub label: String,
    pub inner: MetaLearner,
}

impl CateLearner for NamedMeta {
    fn fit(&self, ds: &Dataset) -> Result<Box<dyn CateEstimator>> {
        self.inner.fit(ds)
    }

    fn name(&self) -> String {
        self.label.clone()
    }
}

impl fmt::Display for RateExperiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emse_examples() {
        assert_eq!(emse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(emse(&[0.0, 0.0], &[8.0, 8.0]).unwrap(), 64.0);
        assert_eq!(emse(&[2.0, 3.0], &[1.0, 3.0]).unwrap(), 0.5);
        assert!(emse(&[], &[]).is_err());
    }

    #[test]
    fn exact_power_laws() {
        let g: Vec<(usize, Vec<f64>)> = [100usize, 200, 400].iter().map(|&n| (n, vec![1.0 / n as f64])).collect();
        let f = rate_fit(&g).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        let g: Vec<(usize, Vec<f64>)> = [100usize, 200, 400, 800]
            .iter()
            .map(|&n| (n, vec![5.0 * (n as f64).powf(-0.4)]))
            .collect();
        let f = rate_fit(&g).unwrap();
        assert!((f.slope + 0.4).abs() < 1e-12);
        assert!((f.intercept - 5f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn rate_fit_errors() {
        assert!(rate_fit(&[(10, vec![1.0])]).is_err());
        assert!(matches!(rate_fit(&[(10, vec![1.0]), (20, vec![0.0])]), Err(Error::ZeroEmse(20))));
    }

    #[test]
    fn coverage_counts() {
        let wide = IntervalEstimate::new(0.0, 1e9, 10, 0.05);
        assert_eq!(coverage_rate(&[wide, wide], &[3.0, -7.0]).unwrap(), 1.0);
        let zero = IntervalEstimate::new(1.0, 0.0, 10, 0.05);
        assert_eq!(coverage_rate(&[zero, zero], &[1.5, 2.0]).unwrap(), 0.0);
        assert_eq!(coverage_rate(&[zero, zero], &[1.0, 2.0]).unwrap(), 0.5);
    }

    #[test]
    fn experiment_names_round_trip() {
        for e in RateExperiment::ALL {
            assert_eq!(RateExperiment::parse(e.name()).unwrap(), e);
        }
        assert!(RateExperiment::parse("nope").is_err());
        assert!((RateExperiment::LipschitzKnn.target_slope(3) + 0.4).abs() < 1e-15);
    }
}

//! Bootstrap confidence intervals and bias diagnostics for pointwise CATE
//! estimates.

use std::fmt;
use std::io::Write;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use crate::data::{csv_field, format_float, Dataset, GroundTruth};
use crate::error::{Arm, Error, Result};
use crate::matrix::Matrix;
use crate::meta::CateLearner;
use crate::rng::derived_rng;
use crate::stats::{mean, normal_quantile, sample_sd};

pub const DEFAULT_B_NORMAL: usize = 1000;
pub const DEFAULT_B_SMOOTHED: usize = 10_000;

/// Largest tolerated share of failed replicates.
pub const MAX_FAILURE_RATE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CiMethod {
    Normal,
    Smoothed,
}

impl fmt::Display for CiMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CiMethod::Normal => "normal",
            CiMethod::Smoothed => "smoothed",
        })
    }
}

/// Interval `center -/+ z sigma` with `z` the upper `alpha / 2` normal quantile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalEstimate {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub sigma: f64,
    /// Replicates that entered sigma.
    pub b: usize,
    pub alpha: f64,
}

impl IntervalEstimate {
    pub fn new(point: f64, sigma: f64, b: usize, alpha: f64) -> Self {
        let z = normal_quantile(1.0 - alpha / 2.0);
        Self {
            point,
            lower: point - z * sigma,
            upper: point + z * sigma,
            sigma,
            b,
            alpha,
        }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Replicate estimates at each point and, optionally, resample counts.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapRecord {
    /// Successful replicates x points.
    pub estimates: Vec<Vec<f64>>,
    /// Successful replicates x training rows; empty unless requested.
    pub counts: Vec<Vec<u32>>,
    pub failures: usize,
    pub requested: usize,
}

fn check_b_alpha(b: usize, alpha: f64) -> Result<()> {
    if b < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 bootstrap replicates, got {b}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside (0,1)")));
    }
    Ok(())
}

fn check_failures(failures: usize, total: usize) -> Result<()> {
    if failures as f64 > MAX_FAILURE_RATE * total as f64 || failures + 2 > total {
        return Err(Error::TooManyFailures {
            failed: failures,
            total,
        });
    }
    Ok(())
}

/// Row indices of bootstrap replicate `b`: `n0` control rows drawn with
/// replacement from the control rows, followed by `n1` treated rows drawn
/// likewise from the treated rows.
pub fn resample_indices(ds: &Dataset, seed: u64, b: usize) -> Vec<usize> {
    let s0 = ds.arm_indices(Arm::Control);
    let s1 = ds.arm_indices(Arm::Treated);
    let mut rng = derived_rng(seed, &[b as u64]);
    let mut out = Vec::with_capacity(ds.len());
    for s in [&s0, &s1] {
        for _ in 0..s.len() {
            out.push(s[rng.gen_range(0..s.len())]);
        }
    }
    out
}

/// Fits `learner` on `b` stratified resamples of `ds` and predicts at `points`.
pub fn bootstrap_replicates(
    ds: &Dataset,
    learner: &dyn CateLearner,
    points: &Matrix,
    b: usize,
    seed: u64,
    keep_counts: bool,
) -> Result<BootstrapRecord> {
    let results: Vec<Option<(Vec<f64>, Vec<u32>)>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let idx = resample_indices(ds, seed, r);
            let est = learner.fit(&ds.select(&idx)).and_then(|m| m.predict(points)).ok()?;
            if est.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let counts = if keep_counts {
                let mut c = vec![0u32; ds.len()];
                for &i in &idx {
                    c[i] += 1;
                }
                c
            } else {
                Vec::new()
            };
            Some((est, counts))
        })
        .collect();
    let failures = results.iter().filter(|r| r.is_none()).count();
    check_failures(failures, b)?;
    let (estimates, counts) = results.into_iter().flatten().unzip::<_, _, Vec<_>, Vec<_>>();
    Ok(BootstrapRecord {
        estimates,
        counts: if keep_counts { counts } else { Vec::new() },
        failures,
        requested: b,
    })
}

fn column(est: &[Vec<f64>], p: usize) -> Vec<f64> {
    est.iter().map(|r| r[p]).collect()
}

/// Normal bootstrap interval around the full-data estimate.
pub fn ci_normal(
    ds: &Dataset,
    learner: &dyn CateLearner,
    points: &Matrix,
    b: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<IntervalEstimate>> {
    check_b_alpha(b, alpha)?;
    let full = learner.fit(ds)?.predict(points)?;
    let rec = bootstrap_replicates(ds, learner, points, b, seed, false)?;
    Ok(normal_from_record(&full, &rec, alpha))
}

pub fn normal_from_record(full: &[f64], rec: &BootstrapRecord, alpha: f64) -> Vec<IntervalEstimate> {
    let used = rec.estimates.len();
    full.iter()
        .enumerate()
        .map(|(p, &point)| IntervalEstimate::new(point, sample_sd(&column(&rec.estimates, p)), used, alpha))
        .collect()
}

/// Smoothed bootstrap interval: centred at the bagged estimate with the
/// covariance-based spread.
pub fn ci_smoothed(
    ds: &Dataset,
    learner: &dyn CateLearner,
    points: &Matrix,
    b: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<IntervalEstimate>> {
    check_b_alpha(b, alpha)?;
    let rec = bootstrap_replicates(ds, learner, points, b, seed, true)?;
    Ok(smoothed_from_record(&rec, alpha))
}

pub fn smoothed_from_record(rec: &BootstrapRecord, alpha: f64) -> Vec<IntervalEstimate> {
    let bb = rec.estimates.len();
    let n = rec.counts.first().map_or(0, Vec::len);
    let count_mean: Vec<f64> = (0..n)
        .map(|j| rec.counts.iter().map(|c| f64::from(c[j])).sum::<f64>() / bb as f64)
        .collect();
    let n_points = rec.estimates.first().map_or(0, Vec::len);
    (0..n_points)
        .map(|p| {
            let est = column(&rec.estimates, p);
            let center = mean(&est);
            let mut total = 0.0;
            for (j, &sbar) in count_mean.iter().enumerate() {
                let cov: f64 = est
                    .iter()
                    .zip(&rec.counts)
                    .map(|(t, c)| (t - center) * (f64::from(c[j]) - sbar))
                    .sum::<f64>()
                    / bb as f64;
                total += cov * cov;
            }
            IntervalEstimate::new(center, total.sqrt(), bb, alpha)
        })
        .collect()
}

/// Bootstrap mean minus full-data estimate at each point.
pub fn bootstrap_bias(
    ds: &Dataset,
    learner: &dyn CateLearner,
    points: &Matrix,
    b: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_b_alpha(b, 0.5)?;
    let full = learner.fit(ds)?.predict(points)?;
    let rec = bootstrap_replicates(ds, learner, points, b, seed, false)?;
    Ok(full
        .iter()
        .enumerate()
        .map(|(p, f)| mean(&column(&rec.estimates, p)) - f)
        .collect())
}

/// Monte Carlo bias with its standard error over the repetitions used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McBias {
    pub bias: f64,
    pub std_error: f64,
    pub reps: usize,
}

/// Bias of `learner` at `points` under re-randomised treatment.
///
/// Each repetition permutes the treatment vector, rebuilds observed outcomes
/// from both potential outcomes, draws `train_size` rows without replacement,
/// fits and predicts. Needs the potential outcomes in `truth`.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_bias(
    ds: &Dataset,
    truth: Option<&GroundTruth>,
    learner: &dyn CateLearner,
    points: &Matrix,
    true_tau: &[f64],
    train_size: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<McBias>> {
    let truth = truth.ok_or(Error::MissingGroundTruth)?;
    if truth.len() != ds.len() || true_tau.len() != points.rows() {
        return Err(Error::InvalidDimension("ground truth does not match the data".into()));
    }
    if reps == 0 || train_size == 0 || train_size > ds.len() {
        return Err(Error::InvalidArgument(format!(
            "need reps >= 1 and 1 <= train_size <= {}",
            ds.len()
        )));
    }
    let results: Vec<Option<Vec<f64>>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = derived_rng(seed, &[r as u64]);
            let mut w = ds.treatment().to_vec();
            w.shuffle(&mut rng);
            let rows = sample(&mut rng, ds.len(), train_size).into_vec();
            let y: Vec<f64> = rows
                .iter()
                .map(|&i| if w[i] { truth.y1[i] } else { truth.y0[i] })
                .collect();
            let wt: Vec<bool> = rows.iter().map(|&i| w[i]).collect();
            let train = Dataset::new(ds.features().select_rows(&rows), wt, y).ok()?;
            learner.fit(&train).and_then(|m| m.predict(points)).ok()
        })
        .collect();
    let failures = results.iter().filter(|r| r.is_none()).count();
    if failures as f64 > MAX_FAILURE_RATE * reps as f64 || failures == reps {
        return Err(Error::TooManyFailures {
            failed: failures,
            total: reps,
        });
    }
    let est: Vec<Vec<f64>> = results.into_iter().flatten().collect();
    let used = est.len();
    Ok((0..points.rows())
        .map(|p| {
            let col = column(&est, p);
            let se = if used > 1 {
                sample_sd(&col) / (used as f64).sqrt()
            } else {
                0.0
            };
            McBias {
                bias: mean(&col) - true_tau[p],
                std_error: se,
                reps: used,
            }
        })
        .collect())
}

/// One row of the interval CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CiRow {
    pub point_id: usize,
    pub learner: String,
    pub method: CiMethod,
    pub interval: IntervalEstimate,
}

pub const CI_CSV_HEADER: &str = "point_id,learner,method,b,alpha,point,sigma,lower,upper";

pub fn write_ci_csv<W: Write>(mut out: W, rows: &[CiRow]) -> Result<()> {
    writeln!(out, "{CI_CSV_HEADER}")?;
    for r in rows {
        let i = &r.interval;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.point_id,
            csv_field(&r.learner),
            r.method,
            i.b,
            i.alpha,
            format_float(i.point),
            format_float(i.sigma),
            format_float(i.lower),
            format_float(i.upper)
        )?;
    }
    Ok(())
}

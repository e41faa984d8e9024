#![allow(dead_code)]

use cate_core::{Dataset, Matrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small dataset with linear arms, both arms holding at least `n / 4` rows.
pub fn linear_toy(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wi = if i % 4 == 0 {
            false
        } else if i % 4 == 1 {
            true
        } else {
            rng.gen_bool(0.5)
        };
        let base: f64 = x.iter().enumerate().map(|(j, v)| (j as f64 + 1.0) * v).sum();
        let effect = 1.0 + x[0] - 0.5 * x[d - 1];
        y.push(base + if wi { effect } else { 0.0 } + rng.gen_range(-0.5..0.5));
        rows.push(x);
        w.push(wi);
    }
    Dataset::new(Matrix::from_rows(&rows).unwrap(), w, y).unwrap()
}

/// Least-squares coefficients via SVD; the intercept, when present, is first.
pub fn lstsq(rows: &[Vec<f64>], y: &[f64], intercept: bool) -> Vec<f64> {
    let p = rows[0].len() + usize::from(intercept);
    let a = DMatrix::from_fn(rows.len(), p, |i, j| {
        if intercept {
            if j == 0 {
                1.0
            } else {
                rows[i][j - 1]
            }
        } else {
            rows[i][j]
        }
    });
    let b = DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    svd.solve(&b, 1e-12).unwrap().iter().copied().collect()
}

pub fn eval_linear(beta: &[f64], x: &[f64], intercept: bool) -> f64 {
    if intercept {
        beta[0] + x.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>()
    } else {
        x.iter().zip(beta).map(|(a, b)| a * b).sum()
    }
}

pub fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(<[f64]>::to_vec).collect()
}

pub struct Split {
    pub x0: Vec<Vec<f64>>,
    pub y0: Vec<f64>,
    pub x1: Vec<Vec<f64>>,
    pub y1: Vec<f64>,
}

pub fn split(ds: &Dataset) -> Split {
    let mut s = Split {
        x0: vec![],
        y0: vec![],
        x1: vec![],
        y1: vec![],
    };
    for i in 0..ds.len() {
        let x = ds.features().row(i).to_vec();
        if ds.treatment()[i] {
            s.x1.push(x);
            s.y1.push(ds.outcome()[i]);
        } else {
            s.x0.push(x);
            s.y0.push(ds.outcome()[i]);
        }
    }
    s
}

/// Closed-form OLS versions of the five meta-learners.
pub mod oracle {
    use super::*;

    pub fn s(ds: &Dataset, points: &[Vec<f64>]) -> Vec<f64> {
        let rows: Vec<Vec<f64>> = (0..ds.len())
            .map(|i| {
                let mut r = ds.features().row(i).to_vec();
                r.push(if ds.treatment()[i] { 1.0 } else { 0.0 });
                r
            })
            .collect();
        let beta = lstsq(&rows, ds.outcome(), true);
        vec![*beta.last().unwrap(); points.len()]
    }

    pub fn t(ds: &Dataset, points: &[Vec<f64>]) -> Vec<f64> {
        let sp = split(ds);
        let b0 = lstsq(&sp.x0, &sp.y0, true);
        let b1 = lstsq(&sp.x1, &sp.y1, true);
        points
            .iter()
            .map(|p| eval_linear(&b1, p, true) - eval_linear(&b0, p, true))
            .collect()
    }

    pub fn x(ds: &Dataset, points: &[Vec<f64>], g: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let sp = split(ds);
        let b0 = lstsq(&sp.x0, &sp.y0, true);
        let b1 = lstsq(&sp.x1, &sp.y1, true);
        let d1: Vec<f64> = sp.x1.iter().zip(&sp.y1).map(|(x, y)| y - eval_linear(&b0, x, true)).collect();
        let d0: Vec<f64> = sp.x0.iter().zip(&sp.y0).map(|(x, y)| eval_linear(&b1, x, true) - y).collect();
        let t1 = lstsq(&sp.x1, &d1, true);
        let t0 = lstsq(&sp.x0, &d0, true);
        points
            .iter()
            .map(|p| {
                let gp = g(p);
                gp * eval_linear(&t0, p, true) + (1.0 - gp) * eval_linear(&t1, p, true)
            })
            .collect()
    }

    pub fn f(ds: &Dataset, points: &[Vec<f64>], e: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let rows = rows_of(ds.features());
        let ystar: Vec<f64> = (0..ds.len())
            .map(|i| {
                let ei = e(&rows[i]);
                let w = if ds.treatment()[i] { 1.0 } else { 0.0 };
                ds.outcome()[i] * (w - ei) / (ei * (1.0 - ei))
            })
            .collect();
        let beta = lstsq(&rows, &ystar, true);
        points.iter().map(|p| eval_linear(&beta, p, true)).collect()
    }

    pub fn u(ds: &Dataset, points: &[Vec<f64>], e: impl Fn(&[f64]) -> f64, floor: f64) -> Vec<f64> {
        let rows = rows_of(ds.features());
        let bo = lstsq(&rows, ds.outcome(), true);
        let r: Vec<f64> = (0..ds.len())
            .map(|i| {
                let w = ds.treatment()[i];
                let mut den = if w { 1.0 } else { 0.0 } - e(&rows[i]);
                if den.abs() < floor {
                    den = if w { floor } else { -floor };
                }
                (ds.outcome()[i] - eval_linear(&bo, &rows[i], true)) / den
            })
            .collect();
        let beta = lstsq(&rows, &r, true);
        points.iter().map(|p| eval_linear(&beta, p, true)).collect()
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A propensity strictly inside (0, 1) that varies with the first feature.
pub fn smooth_propensity(x: &[f64]) -> f64 {
    0.3 + 0.2 * x[0].tanh()
}

pub mod invariants {
    use std::sync::Arc;

    use cate_core::dgp::{draw_dataset, draw_dataset_conditional, vine_correlation};
    use cate_core::evaluation::{run_replications, ReplicationConfig, SampleDesign};
    use cate_core::learners::{honest_forest, ForestParams, OlsRegressor, PropensityModel};
    use cate_core::meta::{fit_x, predict_cate, MetaLearner, WeightRule, XBases};
    use cate_core::stats::ks_two_sample;
    use cate_core::{CateLearner, FeatureLaw, Matrix, SimulationSpec};

    use super::{linear_toy, smooth_propensity};

    /// Pooled X prediction lies between the two second-stage estimates, so
    /// its squared error is bounded by the larger of theirs.
    pub fn sandwich(seed: u64, n: usize) -> Result<(), String> {
        let ds = linear_toy(n, 2, seed);
        let e = PropensityModel::known(Arc::new(smooth_propensity));
        let model = fit_x(&ds, XBases::uniform(&OlsRegressor::default()), WeightRule::Propensity(e)).map_err(|e| e.to_string())?;
        let probes = ds.features();
        let pooled = predict_cate(&model, probes).map_err(|e| e.to_string())?;
        let t0 = model.tau0().unwrap().predict(probes);
        let t1 = model.tau1().unwrap().predict(probes);
        for i in 0..probes.rows() {
            let truth = 1.0 + probes.get(i, 0) - 0.5 * probes.get(i, 1);
            let (lo, hi) = (t0[i].min(t1[i]), t0[i].max(t1[i]));
            let slack = 1e-12 * (1.0 + hi.abs());
            if pooled[i] < lo - slack || pooled[i] > hi + slack {
                return Err(format!("row {i}: {} outside [{lo}, {hi}]", pooled[i]));
            }
            let err = (pooled[i] - truth).powi(2);
            let bound = (t0[i] - truth).powi(2).max((t1[i] - truth).powi(2));
            if err > bound + 1e-9 * (1.0 + bound) {
                return Err(format!("row {i}: squared error {err} above {bound}"));
            }
        }
        Ok(())
    }

    /// Forest predictions are averages of training targets.
    pub fn forest_convexity(seed: u64, n: usize) -> Result<(), String> {
        let ds = linear_toy(n, 3, seed);
        let f = honest_forest(ds.features(), ds.outcome(), &ForestParams::default().with_trees(20).with_seed(seed).with_min_leaf(2))
            .map_err(|e| e.to_string())?;
        let lo = ds.outcome().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ds.outcome().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let probes = linear_toy(50, 3, seed ^ 0xabc);
        for p in cate_core::FittedRegressor::predict(&f, probes.features()) {
            if p < lo - 1e-9 || p > hi + 1e-9 {
                return Err(format!("prediction {p} outside [{lo}, {hi}]"));
            }
        }
        Ok(())
    }

    pub fn vine_psd(d: usize, seed: u64) -> Result<(), String> {
        let c = vine_correlation(d, 2.0, seed).map_err(|e| e.to_string())?;
        for i in 0..d {
            if c.get(i, i) != 1.0 {
                return Err(format!("diagonal {i} = {}", c.get(i, i)));
            }
            for j in 0..d {
                if c.get(i, j) != c.get(j, i) || c.get(i, j).abs() > 1.0 {
                    return Err(format!("entry ({i},{j}) invalid"));
                }
            }
        }
        let min = c.eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        if min <= 0.0 {
            return Err(format!("smallest eigenvalue {min}"));
        }
        Ok(())
    }

    pub fn confounded_spec() -> SimulationSpec {
        SimulationSpec {
            name: "confounded".into(),
            dim: 2,
            propensity: Arc::new(|x: &[f64]| 1.0 / (1.0 + (-2.0 * x[0]).exp())),
            mu0: Arc::new(|x: &[f64]| x[0] + x[1]),
            mu1: Arc::new(|x: &[f64]| 1.0 + 2.0 * x[0]),
            feature_law: FeatureLaw::standard_gaussian(2),
            noise_sd: 1.0,
            noise_correlation: 0.0,
        }
    }

    /// Treated rows from the conditional sampler against treated rows of an
    /// iid draw: KS p-values for the first feature and the outcome.
    pub fn conditional_ks(seed: u64) -> Result<(f64, f64), String> {
        let spec = confounded_spec();
        let (cond, _) = draw_dataset_conditional(&spec, 3000, 500, seed).map_err(|e| e.to_string())?;
        let (iid, _) = draw_dataset(&spec, 8000, seed.wrapping_add(1)).map_err(|e| e.to_string())?;
        let pick = |ds: &cate_core::Dataset| -> (Vec<f64>, Vec<f64>) {
            (0..ds.len())
                .filter(|&i| ds.treatment()[i])
                .map(|i| (ds.features().get(i, 0), ds.outcome()[i]))
                .unzip()
        };
        let (cx, cy) = pick(&cond);
        let (ix, iy) = pick(&iid);
        let px = ks_two_sample(&cx, &ix).map_err(|e| e.to_string())?.p_value;
        let py = ks_two_sample(&cy, &iy).map_err(|e| e.to_string())?.p_value;
        Ok((px, py))
    }

    /// Same seed twice gives identical records; reversing the learner list
    /// gives the same records once sorted by key.
    pub fn replication_determinism(seed: u64) -> Result<(), String> {
        let spec = confounded_spec();
        let a = MetaLearner::T {
            mu0: Arc::new(OlsRegressor::default()),
            mu1: Arc::new(OlsRegressor::default()),
        };
        let b = MetaLearner::S { base: Arc::new(OlsRegressor::default()) };
        let cfg = ReplicationConfig {
            designs: vec![SampleDesign::Total(60), SampleDesign::Total(90)],
            reps: 3,
            test_size: 200,
            base_seed: seed,
            timing: false,
        };
        let fwd: Vec<&dyn CateLearner> = vec![&a, &b];
        let rev: Vec<&dyn CateLearner> = vec![&b, &a];
        let r1 = run_replications(&spec, "c", &fwd, &cfg).map_err(|e| e.to_string())?;
        let r2 = run_replications(&spec, "c", &fwd, &cfg).map_err(|e| e.to_string())?;
        if r1 != r2 {
            return Err("rerun differs".into());
        }
        let mut r3 = run_replications(&spec, "c", &rev, &cfg).map_err(|e| e.to_string())?;
        let mut r1s = r1.clone();
        let key = |r: &cate_core::ReplicationRecord| (r.learner.clone(), r.n_train, r.rep);
        r1s.sort_by_key(key);
        r3.sort_by_key(key);
        if r1s != r3 {
            return Err("learner order changed results".into());
        }
        Ok(())
    }

    pub fn probe_matrix(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }
}

mod common;

use std::sync::Arc;

use cate_core::data::Dataset;
use cate_core::dgp::{builtin_spec, draw_dataset};
use cate_core::evaluation::{
    ci_simulation, coverage_rate, emse, run_replications, s_split_fraction, summarize, write_results_csv,
    CiSimConfig, ReplicationConfig, SampleDesign, TruthSource, RESULTS_CSV_HEADER,
};
use cate_core::inference::{CiMethod, IntervalEstimate};
use cate_core::learners::{ForestParams, KnnRegressor, OlsRegressor};
use cate_core::meta::{fit_s, ConstantLearner, MetaLearner, OracleLearner};
use cate_core::{CateLearner, Error, FeatureLaw, Matrix, SimulationSpec};

fn t_ols() -> MetaLearner {
    MetaLearner::T {
        mu0: Arc::new(OlsRegressor::default()),
        mu1: Arc::new(OlsRegressor::default()),
    }
}

fn cfg(designs: Vec<SampleDesign>, reps: usize) -> ReplicationConfig {
    ReplicationConfig {
        designs,
        reps,
        test_size: 500,
        base_seed: 7,
        timing: false,
    }
}

#[test]
fn emse_two_point_case() {
    assert_eq!(emse(&[2.0, 3.0], &[1.0, 3.0]).unwrap(), 0.5);
    assert!(matches!(emse(&[1.0], &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn one_rep_one_learner_one_size() {
    let spec = builtin_spec(4).unwrap();
    let l = t_ols();
    let recs = run_replications(&spec, "4", &[&l], &cfg(vec![SampleDesign::Total(200)], 1)).unwrap();
    assert_eq!(recs.len(), 1);
    assert!(recs[0].mse >= 0.0);
    assert_eq!(recs[0].n_train, 200);
}

#[test]
fn learners_share_training_draws() {
    let spec = builtin_spec(2).unwrap();
    let a = t_ols();
    let b = MetaLearner::S { base: Arc::new(OlsRegressor::default()) };
    let recs = run_replications(&spec, "2", &[&a, &b], &cfg(vec![SampleDesign::Total(150)], 3)).unwrap();
    assert_eq!(recs.len(), 6);
    for rep in 0..3 {
        let sums: Vec<u64> = recs.iter().filter(|r| r.rep == rep).map(|r| r.train_checksum).collect();
        assert_eq!(sums[0], sums[1]);
    }
    assert_ne!(recs[0].train_checksum, recs[1].train_checksum);
}

#[test]
fn oracle_scores_zero() {
    let spec = builtin_spec(1).unwrap();
    let o = OracleLearner::for_spec(&spec);
    let recs = run_replications(&spec, "1", &[&o], &cfg(vec![SampleDesign::Total(100), SampleDesign::Total(300)], 2)).unwrap();
    assert!(recs.iter().all(|r| r.mse == 0.0));
}

#[test]
fn failures_are_recorded_not_fatal() {
    let spec = builtin_spec(4).unwrap();
    let k = MetaLearner::T {
        mu0: Arc::new(KnnRegressor { k: cate_core::learners::KChoice::Fixed(500) }),
        mu1: Arc::new(KnnRegressor { k: cate_core::learners::KChoice::Fixed(500) }),
    };
    let recs = run_replications(&spec, "4", &[&k], &cfg(vec![SampleDesign::Total(50)], 2)).unwrap();
    assert!(recs.iter().all(|r| r.mse.is_nan() && r.error.is_some()));
    let s = summarize(&recs);
    assert_eq!((s[0].fits, s[0].failures), (0, 2));
    let mut out = Vec::new();
    write_results_csv(&mut out, &recs).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with(RESULTS_CSV_HEADER));
    assert!(text.lines().nth(1).unwrap().contains(",nan,"));
}

#[test]
fn conditional_designs_report_arm_sizes() {
    let spec = builtin_spec(2).unwrap();
    let l = t_ols();
    let d = SampleDesign::Conditional { n_treated: 40, m_control: 90 };
    let recs = run_replications(&spec, "2", &[&l], &cfg(vec![d], 2)).unwrap();
    assert!(recs.iter().all(|r| r.n_treated == 40 && r.m_control == 90 && r.n_train == 130));
}

#[test]
fn coverage_rate_examples() {
    let wide = IntervalEstimate::new(0.0, 1e12, 100, 0.05);
    assert_eq!(coverage_rate(&[wide; 4], &[1.0, -3.0, 9.0, 0.0]).unwrap(), 1.0);
    let at = |p| IntervalEstimate::new(p, 0.0, 100, 0.05);
    assert_eq!(coverage_rate(&[at(1.0), at(2.0)], &[1.5, 2.5]).unwrap(), 0.0);
    assert_eq!(coverage_rate(&[at(1.0), at(2.0)], &[1.0, 2.5]).unwrap(), 0.5);
}

fn forest(trees: usize) -> ForestParams {
    ForestParams::default().with_trees(trees).with_seed(3)
}

fn forest_all_features(trees: usize) -> ForestParams {
    ForestParams {
        mtry: Some(2),
        ..forest(trees)
    }
}

#[test]
fn split_fraction_without_treatment_signal() {
    // constant outcome: nothing is ever split, so no path tests w
    let rows: Vec<[f64; 2]> = (0..60).map(|i| [i as f64, (i % 7) as f64]).collect();
    let w: Vec<bool> = (0..60).map(|i| i % 2 == 0).collect();
    let ds = Dataset::new(Matrix::from_rows(&rows).unwrap(), w, vec![1.0; 60]).unwrap();
    let m = fit_s(&ds, &forest(25)).unwrap();
    let h = s_split_fraction(&m, ds.features(), 10).unwrap();
    assert_eq!(h.counts[9], 25);
    assert!(h.per_tree.iter().all(|&f| f == 1.0));
}

#[test]
fn split_fraction_when_only_treatment_matters() {
    // y depends on w alone and x is constant, so every root splits on w
    let rows: Vec<[f64; 1]> = (0..80).map(|_| [0.5]).collect();
    let w: Vec<bool> = (0..80).map(|i| i % 2 == 0).collect();
    let y: Vec<f64> = w.iter().map(|&t| if t { 10.0 } else { 0.0 }).collect();
    let ds = Dataset::new(Matrix::from_rows(&rows).unwrap(), w, y).unwrap();
    let m = fit_s(&ds, &forest_all_features(25)).unwrap();
    let h = s_split_fraction(&m, ds.features(), 10).unwrap();
    assert_eq!(h.counts[0], 25);
    assert_eq!(h.mass_below(0.5), 1.0);
}

#[test]
fn split_fraction_needs_a_forest() {
    let ds = common::linear_toy(20, 2, 1);
    let m = fit_s(&ds, &OlsRegressor::default()).unwrap();
    assert!(matches!(s_split_fraction(&m, ds.features(), 10), Err(Error::Unsupported(_))));
}

#[test]
fn split_fraction_when_treatment_dominates_outcome() {
    // one covariate, few treated units, effect far larger than the baseline spread
    let spec = SimulationSpec {
        name: "unbalanced-step".into(),
        dim: 1,
        propensity: Arc::new(|_| 0.1),
        mu0: Arc::new(|x: &[f64]| if x[0] < 0.5 { x[0] } else { x[0] - 0.5 }),
        mu1: Arc::new(|x: &[f64]| 8.0 + if x[0] < 0.5 { x[0] } else { x[0] - 0.5 }),
        feature_law: FeatureLaw::UniformCube,
        noise_sd: 1.0,
        noise_correlation: 0.0,
    };
    let (ds, _) = draw_dataset(&spec, 3000, 5).unwrap();
    let m = fit_s(&ds, &forest(100)).unwrap();
    let (probes, _) = spec.draw_test_points(1000, 6).unwrap();
    let h = s_split_fraction(&m, &probes, 20).unwrap();
    assert!(h.mass_below(0.5) > 0.5, "mass below 0.5: {}", h.mass_below(0.5));
}

#[test]
fn ci_simulation_with_oracle_covers_everything() {
    let spec = builtin_spec(4).unwrap();
    let (ds, truth) = draw_dataset(&spec, 400, 3).unwrap();
    let oracle = OracleLearner::for_spec(&spec);
    let c = CiSimConfig { train_size: 200, test_size: 50, b: 10, alpha: 0.05, reps: 2, seed: 4 };
    let rows = ci_simulation(&ds, TruthSource::Synthetic(&truth), &[&oracle], &c).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r.coverage, 1.0);
        assert_eq!(r.mean_length, 0.0);
        assert_eq!(r.nominal, 0.95);
        assert_eq!(r.intervals, 100);
    }
    assert_eq!(rows[0].method, CiMethod::Normal);
    assert_eq!(rows[1].method, CiMethod::Smoothed);
}

#[test]
fn ci_simulation_off_truth_never_covers() {
    let spec = builtin_spec(4).unwrap();
    let (ds, truth) = draw_dataset(&spec, 300, 3).unwrap();
    let off = ConstantLearner(1e-3);
    let c = CiSimConfig { train_size: 100, test_size: 40, b: 5, alpha: 0.05, reps: 1, seed: 4 };
    let rows = ci_simulation(&ds, TruthSource::Synthetic(&truth), &[&off], &c).unwrap();
    assert!(rows.iter().all(|r| r.coverage == 0.0));
}

#[test]
fn ci_simulation_adopts_a_fitted_truth() {
    let ds = common::linear_toy(400, 2, 12);
    let truth_model = t_ols();
    let c = CiSimConfig { train_size: 200, test_size: 30, b: 50, alpha: 0.05, reps: 2, seed: 1 };
    let rows = ci_simulation(&ds, TruthSource::Model(&truth_model), &[&truth_model as &dyn CateLearner], &c).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.coverage > 0.5 && r.mean_length > 0.0));
    let bad = CiSimConfig { train_size: 390, test_size: 30, ..c };
    assert!(ci_simulation(&ds, TruthSource::Model(&truth_model), &[&truth_model as &dyn CateLearner], &bad).is_err());
}

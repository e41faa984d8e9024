use std::hint::black_box;
use std::sync::Arc;

use cate_core::dgp::{builtin_spec, draw_dataset};
use cate_core::learners::{ForestParams, KnnRegressor, OlsRegressor};
use cate_core::meta::{Base, MetaLearner, PropensitySource, WeightChoice};
use cate_core::{CateLearner, Regressor};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn base_learners(c: &mut Criterion) {
    let spec = builtin_spec(4).unwrap();
    let mut g = c.benchmark_group("base");
    g.sample_size(10);
    for n in [1_000usize, 5_000] {
        let (ds, _) = draw_dataset(&spec, n, 1).unwrap();
        let (x, y) = (ds.features(), ds.outcome());
        let forest = ForestParams::default().with_trees(100);
        g.bench_with_input(BenchmarkId::new("forest-100", n), &n, |b, _| {
            b.iter(|| forest.fit(black_box(x), black_box(y)).unwrap())
        });
        let knn = KnnRegressor::default();
        g.bench_with_input(BenchmarkId::new("knn-fit-predict", n), &n, |b, _| {
            b.iter(|| knn.fit(x, y).unwrap().predict(black_box(x)))
        });
        let ols = OlsRegressor::default();
        g.bench_with_input(BenchmarkId::new("ols", n), &n, |b, _| b.iter(|| ols.fit(black_box(x), y).unwrap()));
    }
    g.finish();
}

fn meta_learners(c: &mut Criterion) {
    let spec = builtin_spec(4).unwrap();
    let (ds, _) = draw_dataset(&spec, 2_000, 2).unwrap();
    let rf: Base = Arc::new(ForestParams::default().with_trees(50));
    let known = PropensitySource::Known(spec.propensity.clone());
    let learners = [
        ("s-rf", MetaLearner::S { base: rf.clone() }),
        ("t-rf", MetaLearner::T { mu0: rf.clone(), mu1: rf.clone() }),
        (
            "x-rf",
            MetaLearner::X {
                mu0: rf.clone(),
                mu1: rf.clone(),
                tau0: rf.clone(),
                tau1: rf.clone(),
                weight: WeightChoice::Propensity,
                propensity: known,
            },
        ),
    ];
    let mut g = c.benchmark_group("meta");
    g.sample_size(10);
    for (name, l) in &learners {
        g.bench_function(*name, |b| b.iter(|| l.fit(black_box(&ds)).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, base_learners, meta_learners);
criterion_main!(benches);

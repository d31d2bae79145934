use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::ArrayView2;

use mdgam_core::classifier::{self, BootstrapParams, TrainConfig};
use mdgam_core::estimators::fit_moment;
use mdgam_core::features::{gaussian_profile, md_features, DistanceCache};
use mdgam_core::gam::{self, GamOptions};
use mdgam_core::simgen::{gen_example, ExampleId, ExampleSpec};
use mdgam_core::Dataset;

fn data(id: ExampleId, d: usize, n_train: usize, n_test: usize) -> (Dataset, Dataset) {
    let spec = ExampleSpec { id, d, n_train, n_test };
    gen_example(&spec, 1).expect("example")
}

fn features(c: &mut Criterion) {
    let mut g = c.benchmark_group("features");
    for d in [4usize, 20] {
        let (train, test) = data(ExampleId::Num(2), d, 100, 1000);
        let rows: Vec<_> = (1..=2).map(|j| train.class_rows(j)).collect();
        let models: Vec<_> = rows.iter().map(|r| fit_moment(r.view()).unwrap()).collect();
        let views: Vec<ArrayView2<f64>> = rows.iter().map(|r| r.view()).collect();
        g.bench_with_input(BenchmarkId::new("md", d), &d, |b, _| {
            b.iter(|| md_features(test.rows(), &models).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("distance_cache", d), &d, |b, _| {
            b.iter(|| DistanceCache::new(test.rows(), &views, &models).unwrap())
        });
        let cache = DistanceCache::new(test.rows(), &views, &models).unwrap();
        let kernel = gaussian_profile(d);
        g.bench_with_input(BenchmarkId::new("lmd_from_cache", d), &d, |b, _| {
            b.iter(|| cache.lmd_features(1.0, &kernel).unwrap())
        });
    }
    g.finish();
}

fn gam_fit(c: &mut Criterion) {
    let (train, _) = data(ExampleId::Num(3), 4, 100, 1);
    let models: Vec<_> = (1..=2).map(|j| fit_moment(train.class_rows(j).view()).unwrap()).collect();
    let f = md_features(train.rows(), &models).unwrap();
    let opts = GamOptions::default();
    c.bench_function("gam_fit_n200", |b| {
        b.iter(|| gam::fit(&f, train.labels(), None, &opts).unwrap())
    });
}

fn training(c: &mut Criterion) {
    let mut g = c.benchmark_group("fit");
    g.sample_size(10);
    let (train, test) = data(ExampleId::Num(2), 4, 100, 1000);
    g.bench_function("md", |b| b.iter(|| classifier::fit(&train, &TrainConfig::md()).unwrap()));
    let lmd = TrainConfig {
        bootstrap: BootstrapParams { b: 10, seed: 0 },
        ..TrainConfig::lmd()
    };
    g.bench_function("lmd_b10", |b| b.iter(|| classifier::fit(&train, &lmd).unwrap()));
    let clf = classifier::fit(&train, &lmd).unwrap();
    g.bench_function("lmd_predict_2000", |b| b.iter(|| clf.predict(test.rows()).unwrap()));
    g.finish();
}

criterion_group!(benches, features, gam_fit, training);
criterion_main!(benches);

use super::*;
use crate::seed::rng_from;
use ndarray::{array, Array2};
use rand::Rng;

fn fm(values: Array2<f64>) -> FeatureMatrix {
    FeatureMatrix::new(values, FeatureKind::Md).unwrap()
}

/// Two columns: the signal `f ~ U(0,1)` and an independent noise column.
fn logistic_data(n: usize, seed: u64) -> (FeatureMatrix, Vec<usize>) {
    let mut rng = rng_from(seed, "gam-test", &[]);
    let mut v = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let f: f64 = rng.random();
        let noise: f64 = rng.random::<f64>() * 3.0;
        v[[i, 0]] = f;
        v[[i, 1]] = noise;
        let p1 = 1.0 / (1.0 + (-2.0 * (f - 0.5)).exp());
        labels.push(if rng.random::<f64>() < p1 { 1 } else { 2 });
    }
    (fm(v), labels)
}

#[test]
fn recovers_generating_logit_at_midpoint() {
    let (f, y) = logistic_data(2000, 11);
    let model = fit(&f, &y, None, &GamOptions::default()).unwrap();
    let probe = fm(array![[0.5, 1.5]]);
    let p = model.predict_proba(&probe).unwrap();
    assert!((p[[0, 0]] - 0.5).abs() < 0.05, "p = {}", p[[0, 0]]);
}

#[test]
fn no_signal_gives_priors() {
    let mut rng = rng_from(3, "gam-nosignal", &[]);
    let n = 2000;
    let v = Array2::from_shape_fn((n, 2), |_| rng.random::<f64>());
    let y: Vec<usize> = (0..n).map(|i| 1 + i % 2).collect();
    let model = fit(&fm(v.clone()), &y, None, &GamOptions::default()).unwrap();
    let p = model.predict_proba(&fm(v)).unwrap();
    let worst = p.column(0).iter().fold(0.0_f64, |m, &x| m.max((x - 0.5).abs()));
    assert!(worst < 0.05, "max deviation {worst}");
}

fn three_class_separable() -> (FeatureMatrix, Vec<usize>) {
    let mut rng = rng_from(5, "gam-sep", &[]);
    let n = 300;
    let mut v = Array2::zeros((n, 3));
    let mut y = Vec::new();
    for i in 0..n {
        let c = i % 3;
        for j in 0..3 {
            let base = if j == c { 0.2 } else { 3.0 };
            v[[i, j]] = base + 0.3 * rng.random::<f64>();
        }
        y.push(c + 1);
    }
    (fm(v), y)
}

#[test]
fn separable_three_class_training_accuracy() {
    let (f, y) = three_class_separable();
    let model = fit(&f, &y, None, &GamOptions::default()).unwrap();
    let pred = model.predict_class(&f).unwrap();
    let acc = pred.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64;
    assert!(acc > 0.99, "accuracy {acc}");
    assert!(model.coefficients.iter().all(|c| c.is_finite() && c.abs() <= 20.0 + 1e-9));
}

#[test]
fn zero_scores_are_uniform() {
    let (f, y) = three_class_separable();
    let mut model = fit(&f, &y, None, &GamOptions::default()).unwrap();
    model.coefficients.fill(0.0);
    model.prior_shift.fill(0.0);
    let p = model.predict_proba(&f).unwrap();
    assert!(p.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
}

#[test]
fn posteriors_normalized_and_argmax_consistent() {
    let (f, y) = logistic_data(400, 2);
    let model = fit(&f, &y, None, &GamOptions::default()).unwrap();
    let mut rng = rng_from(9, "gam-rows", &[]);
    // includes values far outside the training range
    let probe = Array2::from_shape_fn((1000, 2), |_| rng.random::<f64>() * 8.0);
    let probe = fm(probe);
    let p = model.predict_proba(&probe).unwrap();
    for row in p.outer_iter() {
        assert!((row.sum() - 1.0).abs() < 1e-12);
        assert!(row.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }
    let classes = model.predict_class(&probe).unwrap();
    assert_eq!(classes, argmax_labels(p.view()));
}

#[test]
fn argmax_tie_rule() {
    assert_eq!(argmax_labels(array![[0.2, 0.5, 0.3]].view()), vec![2]);
    assert_eq!(argmax_labels(array![[0.5, 0.5]].view()), vec![1]);
    assert_eq!(argmax_labels(array![[0.3, 0.35, 0.35]].view()), vec![2]);
}

#[test]
fn monotone_signal_gives_monotone_posterior() {
    let (f, y) = logistic_data(2000, 21);
    let model = fit(&f, &y, None, &GamOptions::default()).unwrap();
    let grid = Array2::from_shape_fn((41, 2), |(i, j)| if j == 0 { i as f64 / 40.0 } else { 1.5 });
    let p = model.predict_proba(&fm(grid)).unwrap();
    let first = p[[0, 0]];
    let last = p[[40, 0]];
    assert!(last > first + 0.2);
    // allow tiny wiggles from the spline fit
    for i in 1..41 {
        assert!(p[[i, 0]] >= p[[i - 1, 0]] - 0.01, "dip at {i}");
    }
}

#[test]
fn terms_are_centered() {
    let (f, y) = three_class_separable();
    let (f2, y2) = logistic_data(500, 4);
    for (f, y) in [(f, y), (f2, y2)] {
        let model = fit(&f, &y, None, &GamOptions::default()).unwrap();
        for j in 0..model.n_classes() - 1 {
            for k in 0..model.n_classes() {
                let col = f.values().column(k).to_vec();
                let mean = col.iter().map(|&x| model.term(j, k, x)).sum::<f64>() / col.len() as f64;
                assert!(mean.abs() < 1e-8, "term ({j},{k}) mean {mean}");
            }
        }
    }
}

fn curvature(model: &GamModel, j: usize, k: usize, lo: f64, hi: f64) -> f64 {
    let n = 50;
    let step = (hi - lo) / n as f64;
    (1..n)
        .map(|i| {
            let x = lo + i as f64 * step;
            (model.term(j, k, x + step) - 2.0 * model.term(j, k, x) + model.term(j, k, x - step)).abs()
        })
        .sum()
}

#[test]
fn huge_lambda_leaves_linear_terms() {
    let mut rng = rng_from(8, "gam-curv", &[]);
    let n = 1000;
    let mut v = Array2::zeros((n, 2));
    let mut y = Vec::new();
    for i in 0..n {
        let f: f64 = rng.random::<f64>() * 4.0;
        v[[i, 0]] = f;
        v[[i, 1]] = rng.random::<f64>();
        let logit = 2.0 * (f * 1.5).sin();
        y.push(if rng.random::<f64>() < 1.0 / (1.0 + (-logit).exp()) { 1 } else { 2 });
    }
    let f = fm(v);
    let rough = GamOptions {
        lambda_grid: vec![0.0],
        ..GamOptions::default()
    };
    let smooth = GamOptions {
        lambda_grid: vec![1e8],
        ..GamOptions::default()
    };
    let m0 = fit(&f, &y, None, &rough).unwrap();
    let m8 = fit(&f, &y, None, &smooth).unwrap();
    let c0 = curvature(&m0, 0, 0, 0.1, 3.9);
    let c8 = curvature(&m8, 0, 0, 0.1, 3.9);
    assert!(c0 > 0.0);
    assert!(c8 < 1e-4 * c0, "curvature {c8} vs {c0}");
}

#[test]
fn penalized_deviance_never_increases() {
    for (f, y) in [logistic_data(500, 31), three_class_separable()] {
        let model = fit(&f, &y, None, &GamOptions::default()).unwrap();
        let t = &model.convergence().trace;
        assert!(!t.is_empty());
        for w in t.windows(2) {
            assert!(w[1] <= w[0], "trace increased: {t:?}");
        }
    }
}

#[test]
fn label_permutation_permutes_posteriors() {
    let mut rng = rng_from(17, "gam-perm", &[]);
    let n = 450;
    let mut v = Array2::zeros((n, 3));
    let mut y = Vec::new();
    for i in 0..n {
        let c = i % 3;
        for j in 0..3 {
            v[[i, j]] = rng.random::<f64>() + if j == c { 0.0 } else { 0.6 };
        }
        y.push(c + 1);
    }
    let model = fit(&fm(v.clone()), &y, None, &GamOptions::default()).unwrap();
    // swap classes 1 and 2; the baseline (class 3) stays last
    let mut v2 = v.clone();
    for i in 0..n {
        v2[[i, 0]] = v[[i, 1]];
        v2[[i, 1]] = v[[i, 0]];
    }
    let y2: Vec<usize> = y.iter().map(|&c| match c { 1 => 2, 2 => 1, c => c }).collect();
    let model2 = fit(&fm(v2.clone()), &y2, None, &GamOptions::default()).unwrap();
    let p = model.predict_proba(&fm(v)).unwrap();
    let p2 = model2.predict_proba(&fm(v2)).unwrap();
    for i in 0..n {
        assert!((p[[i, 0]] - p2[[i, 1]]).abs() < 1e-6);
        assert!((p[[i, 1]] - p2[[i, 0]]).abs() < 1e-6);
        assert!((p[[i, 2]] - p2[[i, 2]]).abs() < 1e-6);
    }
}

#[test]
fn prior_override_shifts_intercepts() {
    let (f, y) = logistic_data(600, 44);
    let base = fit(&f, &y, None, &GamOptions::default()).unwrap();
    let n1 = y.iter().filter(|&&c| c == 1).count() as f64;
    let n2 = y.len() as f64 - n1;
    let same = fit(&f, &y, Some(&[n1, n2]), &GamOptions::default()).unwrap();
    assert!((same.intercepts()[0] - base.intercepts()[0]).abs() < 1e-12);
    let skew = fit(&f, &y, Some(&[0.8, 0.2]), &GamOptions::default()).unwrap();
    let want = base.intercepts()[0] + (0.8f64 / 0.2).ln() - (n1 / n2).ln();
    assert!((skew.intercepts()[0] - want).abs() < 1e-12);
}

#[test]
fn validation_errors() {
    let (f, mut y) = logistic_data(100, 1);
    y.iter_mut().for_each(|c| *c = 1);
    assert_eq!(
        fit(&f, &y, None, &GamOptions::default()).unwrap_err(),
        GamError::MissingClass(2)
    );
    let (f, y) = logistic_data(100, 1);
    let model = fit(&f, &y, None, &GamOptions::default()).unwrap();
    let other = FeatureMatrix::new(f.values().to_owned(), FeatureKind::Lmd { h: 0.5 }).unwrap();
    assert!(matches!(model.predict_proba(&other), Err(GamError::KindMismatch { .. })));
}

#[test]
fn text_round_trip_is_exact() {
    let (f, y) = three_class_separable();
    let model = fit(&f, &y, None, &GamOptions::default()).unwrap();
    let back = GamModel::from_text(&model.to_text()).unwrap();
    let a = model.predict_proba(&f).unwrap();
    let b = back.predict_proba(&f).unwrap();
    assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(back.lambda(), model.lambda());
    assert!(GamModel::from_text("mdgam-gam 2\n").is_err());
}

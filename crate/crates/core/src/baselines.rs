//! Reference classifiers: linear and quadratic Gaussian discriminants and
//! Euclidean k-nearest neighbours with a cross-validated `k`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use thiserror::Error;

use crate::dataset::Dataset;
use crate::estimators::{fit_scatter, EstimatorError, McdOptions, ScatterMode, ScatterModel};
use crate::features::sq_distance_matrix;
use crate::seed::rng_from;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("k = {k} is not usable with smallest class size {min_class}")]
    BadK { k: usize, min_class: usize },
    #[error("class {0} has no training rows")]
    EmptyClass(usize),
    #[error("dimension mismatch: model has d = {expected}, input has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

type Result<T> = std::result::Result<T, BaselineError>;

/// Odd neighbour counts tried by cross-validation.
pub const KNN_GRID: [usize; 11] = [1, 3, 5, 7, 9, 11, 13, 15, 17, 19, 21];
pub const KNN_FOLDS: usize = 5;

fn check_classes(train: &Dataset) -> Result<()> {
    for (j, &c) in train.class_counts().iter().enumerate() {
        if c == 0 {
            return Err(BaselineError::EmptyClass(j + 1));
        }
    }
    Ok(())
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(BaselineError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Labels `1..=J` of the row-wise maxima; ties go to the smaller label.
fn argmax_rows(scores: &Array2<f64>) -> Vec<usize> {
    scores
        .outer_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best + 1
        })
        .collect()
}

/// Gaussian discriminant with one pooled scatter.
#[derive(Debug, Clone)]
pub struct Lda {
    means: Vec<Array1<f64>>,
    /// Pooled scatter; its location is unused.
    pooled: ScatterModel,
    log_priors: Vec<f64>,
}

/// Fits LDA. The pooled scatter is `Σ_j n_j S_j / n` with `S_j` from `mode`
/// (moment, diagonal, identity or MCD); a singular pooled scatter goes
/// through the usual ridge fallback.
pub fn lda_fit(train: &Dataset, mode: ScatterMode, mcd: Option<&McdOptions>) -> Result<Lda> {
    check_classes(train)?;
    let d = train.d();
    let n = train.n() as f64;
    let mut pooled = Array2::<f64>::zeros((d, d));
    let mut means = Vec::with_capacity(train.n_classes());
    for j in 1..=train.n_classes() {
        let rows = train.class_rows(j);
        let m = match mode {
            ScatterMode::Identity => fit_scatter(rows.view(), ScatterMode::Identity, None)?,
            ScatterMode::Mcd => fit_scatter(rows.view(), mode, mcd)?,
            // pooled moment-type scatters only need the class mean and S_j
            _ if rows.nrows() == 1 => fit_scatter(rows.view(), ScatterMode::Identity, None)?,
            _ => fit_scatter(rows.view(), ScatterMode::Moment, None)?,
        };
        if m.mode != ScatterMode::Identity {
            pooled.scaled_add(rows.nrows() as f64 / n, &m.scatter);
        }
        means.push(m.location);
    }
    let scatter = match mode {
        ScatterMode::Identity => Array2::eye(d),
        ScatterMode::Diagonal => {
            Array2::from_diag(&pooled.diag().mapv(|v| v.max(crate::estimators::VARIANCE_FLOOR)))
        }
        _ => pooled,
    };
    let mode = match mode {
        ScatterMode::Mcd => ScatterMode::Moment,
        m => m,
    };
    let pooled = ScatterModel::from_parts(0, Array1::zeros(d), scatter, mode)?;
    let log_priors = train.proportions().iter().map(|p| p.ln()).collect();
    Ok(Lda {
        means,
        pooled,
        log_priors,
    })
}

impl Lda {
    /// `−½ (x−μ_j)ᵀ Σ⁻¹ (x−μ_j) + ln π_j` for every row and class.
    pub fn scores(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim(self.pooled.dim(), x.ncols())?;
        let mut out = Array2::zeros((x.nrows(), self.means.len()));
        let wx = self.pooled.whitener.apply_rows(x);
        for (j, mu) in self.means.iter().enumerate() {
            let wm = self.pooled.whitener.apply(mu.view());
            for (i, row) in wx.outer_iter().enumerate() {
                let diff = &row - &wm;
                out[[i, j]] = -0.5 * diff.dot(&diff) + self.log_priors[j];
            }
        }
        Ok(out)
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.scores(x)?))
    }
}

/// Gaussian discriminant with per-class scatter.
#[derive(Debug, Clone)]
pub struct Qda {
    models: Vec<ScatterModel>,
    log_priors: Vec<f64>,
}

/// Fits QDA with moment or diagonal class scatters.
pub fn qda_fit(train: &Dataset, mode: ScatterMode, mcd: Option<&McdOptions>) -> Result<Qda> {
    check_classes(train)?;
    let models = (1..=train.n_classes())
        .map(|j| fit_scatter(train.class_rows(j).view(), mode, mcd))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let log_priors = train.proportions().iter().map(|p| p.ln()).collect();
    Ok(Qda { models, log_priors })
}

impl Qda {
    /// `−½ (x−μ_j)ᵀ Σ_j⁻¹ (x−μ_j) − ½ ln|Σ_j| + ln π_j`.
    pub fn scores(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim(self.models[0].dim(), x.ncols())?;
        let mut out = Array2::zeros((x.nrows(), self.models.len()));
        for (j, m) in self.models.iter().enumerate() {
            let centered = &x - &m.location.view().insert_axis(ndarray::Axis(0));
            let w = m.whitener.apply_rows(centered.view());
            for (i, row) in w.outer_iter().enumerate() {
                out[[i, j]] = -0.5 * row.dot(&row) - 0.5 * m.log_det + self.log_priors[j];
            }
        }
        Ok(out)
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.scores(x)?))
    }
}

/// Euclidean k-nearest-neighbour rule.
#[derive(Debug, Clone)]
pub struct Knn {
    rows: Array2<f64>,
    labels: Vec<usize>,
    n_classes: usize,
    pub k: usize,
    /// Cross-validated error per entry of [`KNN_GRID`] that was tried.
    pub cv_errors: Vec<(usize, f64)>,
}

/// Neighbour order of each query row: indices sorted by distance, ties by index.
fn neighbour_order(q: ArrayView2<f64>) -> Vec<Vec<usize>> {
    q.outer_iter()
        .map(|row| {
            let mut idx: Vec<usize> = (0..row.len()).collect();
            idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
            idx
        })
        .collect()
}

/// Majority label among the first `k` neighbours; ties go to the smaller label.
fn vote(order: &[usize], labels: &[usize], k: usize, n_classes: usize) -> usize {
    let mut counts = vec![0usize; n_classes + 1];
    for &i in order.iter().take(k) {
        counts[labels[i]] += 1;
    }
    let mut best = 1;
    for c in 2..=n_classes {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    best
}

/// kNN with a fixed `k`, which must not exceed the smallest class size.
pub fn knn_fit_k(train: &Dataset, k: usize) -> Result<Knn> {
    check_classes(train)?;
    let min_class = train.class_counts().into_iter().min().unwrap_or(0);
    if k == 0 || k > min_class {
        return Err(BaselineError::BadK { k, min_class });
    }
    Ok(Knn {
        rows: train.rows().to_owned(),
        labels: train.labels().to_vec(),
        n_classes: train.n_classes(),
        k,
        cv_errors: Vec::new(),
    })
}

/// Stratified fold index of every row.
fn fold_assignment(train: &Dataset, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from(seed, "knn-folds", &[]);
    let mut fold = vec![0; train.n()];
    let mut offset = 0;
    for j in 1..=train.n_classes() {
        let mut idx = train.class_indices(j);
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            fold[i] = (offset + pos) % folds;
        }
        offset += train.class_counts()[j - 1];
    }
    fold
}

/// kNN with `k` chosen from [`KNN_GRID`] (values up to the smallest class
/// size) by stratified 5-fold cross-validation. Ties go to the smaller `k`.
pub fn knn_fit(train: &Dataset, seed: u64) -> Result<Knn> {
    check_classes(train)?;
    let min_class = train.class_counts().into_iter().min().unwrap_or(0);
    let grid: Vec<usize> = KNN_GRID.iter().copied().filter(|&k| k <= min_class).collect();
    if grid.is_empty() {
        return Err(BaselineError::BadK { k: 1, min_class });
    }
    let folds = KNN_FOLDS.min(train.n());
    let fold = fold_assignment(train, folds, seed);
    let mut wrong = vec![0usize; grid.len()];
    for f in 0..folds {
        let tr: Vec<usize> = (0..train.n()).filter(|&i| fold[i] != f).collect();
        let te: Vec<usize> = (0..train.n()).filter(|&i| fold[i] == f).collect();
        if te.is_empty() {
            continue;
        }
        let a = train.subset(&tr);
        let b = train.subset(&te);
        let order = neighbour_order(sq_distance_matrix(b.rows(), a.rows()).view());
        for (gi, &k) in grid.iter().enumerate() {
            for (o, &truth) in order.iter().zip(b.labels()) {
                if vote(o, a.labels(), k.min(tr.len()), train.n_classes()) != truth {
                    wrong[gi] += 1;
                }
            }
        }
    }
    let cv_errors: Vec<(usize, f64)> = grid
        .iter()
        .zip(&wrong)
        .map(|(&k, &w)| (k, w as f64 / train.n() as f64))
        .collect();
    let mut best = 0;
    for (i, e) in cv_errors.iter().enumerate() {
        if e.1 < cv_errors[best].1 {
            best = i;
        }
    }
    let mut model = knn_fit_k(train, cv_errors[best].0)?;
    model.cv_errors = cv_errors;
    Ok(model)
}

impl Knn {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        check_dim(self.rows.ncols(), x.ncols())?;
        let order = neighbour_order(sq_distance_matrix(x, self.rows.view()).view());
        Ok(order
            .iter()
            .map(|o| vote(o, &self.labels, self.k, self.n_classes))
            .collect())
    }

    pub fn predict_one(&self, x: ArrayView1<f64>) -> Result<usize> {
        Ok(self.predict(x.insert_axis(ndarray::Axis(0)))?[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{gen_example, ExampleId, ExampleSpec};
    use ndarray::array;

    fn example(id: ExampleId, d: usize, n_train: usize, n_test: usize, seed: u64) -> (Dataset, Dataset) {
        gen_example(
            &ExampleSpec {
                id,
                d,
                n_train,
                n_test,
            },
            seed,
        )
        .unwrap()
    }

    fn error(pred: &[usize], truth: &[usize]) -> f64 {
        pred.iter().zip(truth).filter(|(a, b)| a != b).count() as f64 / truth.len() as f64
    }

    #[test]
    fn one_nn_reproduces_training_labels() {
        let (train, _) = example(ExampleId::Num(2), 3, 40, 10, 1);
        let knn = knn_fit_k(&train, 1).unwrap();
        assert_eq!(knn.predict(train.rows()).unwrap(), train.labels());
    }

    #[test]
    fn bad_k_is_rejected() {
        let (train, _) = example(ExampleId::Num(2), 3, 4, 10, 1);
        assert!(matches!(knn_fit_k(&train, 5), Err(BaselineError::BadK { k: 5, min_class: 4 })));
        let knn = knn_fit(&train, 0).unwrap();
        assert!(knn.k <= 4);
    }

    #[test]
    fn vote_ties_go_to_smaller_label() {
        assert_eq!(vote(&[0, 1], &[2, 1], 2, 2), 1);
        assert_eq!(vote(&[0, 1, 2], &[3, 2, 2], 3, 3), 2);
    }

    #[test]
    fn knn_is_invariant_under_rotation() {
        let (train, test) = example(ExampleId::Num(2), 2, 50, 50, 3);
        let t = std::f64::consts::FRAC_PI_3;
        let r = array![[t.cos(), -t.sin()], [t.sin(), t.cos()]];
        let rot = |x: ArrayView2<f64>| x.dot(&r.t());
        let train2 = Dataset::new(rot(train.rows()), train.labels().to_vec()).unwrap();
        let a = knn_fit(&train, 7).unwrap();
        let b = knn_fit(&train2, 7).unwrap();
        assert_eq!(a.k, b.k);
        assert_eq!(a.predict(test.rows()).unwrap(), b.predict(rot(test.rows()).view()).unwrap());
    }

    #[test]
    fn lda_scores_are_affine_along_lines() {
        let (train, _) = example(ExampleId::Num(3), 3, 50, 10, 4);
        let lda = lda_fit(&train, ScatterMode::Moment, None).unwrap();
        let x0 = array![0.3, -0.2, 0.5];
        let v = array![1.0, 2.0, -0.5];
        let line = Array2::from_shape_fn((3, 3), |(i, k)| x0[k] + (i as f64 - 1.0) * 0.7 * v[k]);
        let s = lda.scores(line.view()).unwrap();
        let diff = |i: usize| s[[i, 0]] - s[[i, 1]];
        assert!((diff(0) - 2.0 * diff(1) + diff(2)).abs() < 1e-9);
    }

    #[test]
    fn qda_matches_closed_form_gaussian_log_density() {
        let (train, test) = example(ExampleId::Num(3), 2, 40, 5, 5);
        let qda = qda_fit(&train, ScatterMode::Moment, None).unwrap();
        let s = qda.scores(test.rows()).unwrap();
        // oracle: explicit 2×2 inverse and determinant
        for j in 1..=2 {
            let rows = train.class_rows(j);
            let n = rows.nrows() as f64;
            let mu = rows.mean_axis(ndarray::Axis(0)).unwrap();
            let c = (&rows - &mu).t().dot(&(&rows - &mu)) / n;
            let det = c[[0, 0]] * c[[1, 1]] - c[[0, 1]] * c[[1, 0]];
            let inv = array![[c[[1, 1]], -c[[0, 1]]], [-c[[1, 0]], c[[0, 0]]]] / det;
            for (i, x) in test.rows().outer_iter().enumerate() {
                let diff = &x - &mu;
                let want = -0.5 * diff.dot(&inv.dot(&diff)) - 0.5 * det.ln() + 0.5f64.ln();
                assert!((s[[i, j - 1]] - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn qda_agrees_with_lda_on_equal_covariances() {
        let (train, test) = example(ExampleId::Num(2), 2, 1000, 1000, 6);
        let lda = lda_fit(&train, ScatterMode::Moment, None).unwrap().predict(test.rows()).unwrap();
        let qda = qda_fit(&train, ScatterMode::Moment, None).unwrap().predict(test.rows()).unwrap();
        let agree = lda.iter().zip(&qda).filter(|(a, b)| a == b).count() as f64 / lda.len() as f64;
        assert!(agree > 0.95, "agreement {agree}");
    }

    #[test]
    fn singular_class_scatter_uses_ridge() {
        let rows = array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [5.0, 0.0], [6.0, 1.0], [7.0, 0.5]];
        let train = Dataset::new(rows, vec![1, 1, 1, 2, 2, 2]).unwrap();
        let qda = qda_fit(&train, ScatterMode::Moment, None).unwrap();
        let p = qda.predict(array![[1.5, 1.5], [6.0, 0.6]].view()).unwrap();
        assert_eq!(p, vec![1, 2]);
    }

    #[test]
    fn identical_classes_give_chance_error() {
        let (train, test) = example(ExampleId::Num(2), 2, 200, 2000, 7);
        // relabel at random: both classes now share one distribution
        let mut rng = rng_from(1, "shuffle", &[]);
        let mut labels = train.labels().to_vec();
        labels.shuffle(&mut rng);
        let noise = Dataset::new(train.rows().to_owned(), labels).unwrap();
        let mut test_labels = test.labels().to_vec();
        test_labels.shuffle(&mut rng);
        let pred = lda_fit(&noise, ScatterMode::Moment, None).unwrap().predict(test.rows()).unwrap();
        let e = error(&pred, &test_labels);
        assert!((e - 0.5).abs() < 0.05, "error {e}");
    }

    #[test]
    fn diagonal_lda_ignores_off_diagonal() {
        let (train, test) = example(ExampleId::Num(4), 3, 60, 20, 2);
        let a = lda_fit(&train, ScatterMode::Diagonal, None).unwrap();
        assert!(a.pooled.scatter.iter().enumerate().all(|(i, v)| i % 4 == 0 || *v == 0.0));
        assert_eq!(a.predict(test.rows()).unwrap().len(), test.n());
    }
}
